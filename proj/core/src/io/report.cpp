#include "csiforge/io/report.hpp"

#include "csiforge/io/persistence.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace csiforge::io {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

std::string report_csv(const training::EvalReport& report) {
  std::ostringstream os;
  os << kCsvHeader << "\n";
  for (const auto& r : report.rows)
    os << r.method << ',' << r.codebook << ',' << r.overhead_bits << ',' << g17(r.mean_rate)
       << ',' << g17(r.ci95) << ',' << r.n << ',' << r.seed << ',' << r.config_hash << "\n";
  return os.str();
}

std::string report_dat(const training::EvalReport& report) {
  std::vector<std::string> methods;
  for (const auto& r : report.rows)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      methods.push_back(r.method);
  std::set<std::string> hashes;
  for (const auto& r : report.rows) hashes.insert(r.config_hash);

  std::ostringstream os;
  for (const auto& h : hashes) os << "# config_hash " << h << "\n";
  os << "# columns: overhead_bits mean_rate ci95\n";
  for (std::size_t m = 0; m < methods.size(); ++m) {
    if (m) os << "\n\n";
    os << "# " << methods[m] << "\n";
    std::vector<const training::EvalRow*> rows;
    for (const auto& r : report.rows)
      if (r.method == methods[m]) rows.push_back(&r);
    std::stable_sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) {
      return a->overhead_bits < b->overhead_bits;
    });
    for (const auto* r : rows)
      os << r->overhead_bits << ' ' << g17(r->mean_rate) << ' ' << g17(r->ci95) << "\n";
  }
  return os.str();
}

std::filesystem::path emit_report(const training::EvalReport& report,
                                  const std::filesystem::path& dir, const std::string& name) {
  CSIFORGE_EXPECT(!report.rows.empty(), "emit_report: empty report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  const auto csv = dir / (name + ".csv");
  write_text(csv, report_csv(report));
  write_text(dir / (name + ".dat"), report_dat(report));
  return csv;
}

training::EvalReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw DataFormatError(path.string() + ": missing or unexpected CSV header");
  training::EvalReport report;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 8)
      throw DataFormatError(path.string() + ":" + std::to_string(lineno) + ": expected 8 fields");
    training::EvalRow r;
    try {
      r.method = f[0];
      r.codebook = f[1];
      r.overhead_bits = std::stoi(f[2]);
      r.mean_rate = std::stod(f[3]);
      r.ci95 = std::stod(f[4]);
      r.n = std::stoi(f[5]);
      r.seed = std::stoull(f[6]);
      r.config_hash = f[7];
    } catch (const std::exception&) {
      throw DataFormatError(path.string() + ":" + std::to_string(lineno) + ": malformed field");
    }
    report.rows.push_back(std::move(r));
  }
  return report;
}

DirectoryLock::DirectoryLock(const std::filesystem::path& dir) : path_(dir / ".csiforge.lock") {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  fd_ = ::open(path_.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (fd_ < 0) throw ConfigError("cannot create lock file " + path_.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw ConfigError("output directory " + dir.string() + " is locked by another process");
  }
}

DirectoryLock::~DirectoryLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

}  // namespace csiforge::io
