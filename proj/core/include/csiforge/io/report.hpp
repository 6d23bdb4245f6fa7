/**
 * @file report.hpp
 * @brief CSV and gnuplot emission of evaluation reports, and the output
 * directory lock.
 */
#pragma once

#include "csiforge/training.hpp"

#include <filesystem>
#include <string>

namespace csiforge::io {

inline const std::string kCsvHeader =
    "method,codebook,overhead_bits,mean_rate,ci95,n,seed,config_hash";

/// CSV text, one row per report row; doubles printed with 17 significant
/// digits.
std::string report_csv(const training::EvalReport& report);

/// Gnuplot data: one block per method (in first-appearance order), rows
/// "overhead_bits mean_rate ci95" sorted by overhead, blocks separated by
/// two blank lines and introduced by a "# <method>" comment.
std::string report_dat(const training::EvalReport& report);

/// Writes `<name>.csv` and `<name>.dat` into `dir`; returns the CSV path.
std::filesystem::path emit_report(const training::EvalReport& report,
                                  const std::filesystem::path& dir,
                                  const std::string& name = "report");

/// Parses a CSV written by emit_report (per-sample rates are not stored).
training::EvalReport read_report_csv(const std::filesystem::path& path);

/// Exclusive ownership of an output directory through `<dir>/.csiforge.lock`.
/// Throws ConfigError when another process holds it.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

}  // namespace csiforge::io
