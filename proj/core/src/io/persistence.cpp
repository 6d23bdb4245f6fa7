#include "csiforge/io/persistence.hpp"

#include "csiforge/io/config.hpp"
#include "csiforge/io/json_types.hpp"
#include "csiforge/util.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace csiforge::io {

namespace {

constexpr char kDatasetMagic[4] = {'C', 'S', 'I', 'F'};
constexpr char kCheckpointMagic[4] = {'C', 'S', 'I', 'W'};

enum class NetKind : std::uint32_t { kNone = 0, kRefiner = 1, kEncDec = 2 };

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void cmat(const CMat& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        f64(m(r, c).real());
        f64(m(r, c).imag());
      }
  }
  void crc() { u32(util::crc32(buf_)); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const char* what) : b_(bytes), what_(what) {}

  void need(std::size_t n) const {
    if (pos_ + n > b_.size())
      throw DataFormatError(std::string(what_) + ": length error, file truncated at byte " +
                            std::to_string(b_.size()));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  CMat cmat(int rows, int cols) {
    need(static_cast<std::size_t>(rows) * cols * 16);
    CMat m(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) {
        const double re = f64();
        const double im = f64();
        m(r, c) = cd(re, im);
      }
    return m;
  }
  void magic(const char (&expected)[4]) {
    need(4);
    if (std::memcmp(b_.data(), expected, 4) != 0)
      throw DataFormatError(std::string(what_) + ": bad magic, expected '" +
                            std::string(expected, 4) + "'");
    pos_ = 4;
  }
  void version(std::uint32_t supported) {
    const std::uint32_t v = u32();
    if (v != supported)
      throw DataFormatError(std::string(what_) + ": version mismatch, file has version " +
                            std::to_string(v) + " but this reader supports version " +
                            std::to_string(supported));
  }
  /// Verifies the trailing CRC over everything before it; must be last.
  void crc() {
    need(4);
    const std::uint32_t expected = util::crc32(b_.subspan(0, pos_));
    const std::uint32_t stored = u32();
    if (pos_ != b_.size())
      throw DataFormatError(std::string(what_) + ": length error, " +
                            std::to_string(b_.size() - pos_) + " trailing bytes");
    if (stored != expected) throw DataFormatError(std::string(what_) + ": CRC mismatch");
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> b_;
  const char* what_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_dataset(const channel::Dataset& ds, std::uint32_t version) {
  Writer w;
  w.raw(kDatasetMagic, 4);
  w.u32(version);
  w.u32(static_cast<std::uint32_t>(ds.n_tx));
  w.u32(static_cast<std::uint32_t>(ds.n_subcarriers));
  w.u32(static_cast<std::uint32_t>(ds.n_taps));
  w.u32(static_cast<std::uint32_t>(ds.n_users));
  w.u64(ds.records.size());
  w.u64(ds.scenario_hash);
  for (const auto& rec : ds.records) {
    CSIFORGE_EXPECT(static_cast<int>(rec.users.size()) == ds.n_users &&
                        static_cast<int>(rec.estimates.size()) == ds.n_users,
                    "encode_dataset: record user count mismatch");
    w.u64(rec.scenario_id);
    w.u64(rec.sample_index);
    for (int u = 0; u < ds.n_users; ++u) {
      const auto& uc = rec.users[u];
      CSIFORGE_EXPECT(uc.taps.rows() == ds.n_taps && uc.taps.cols() == ds.n_tx &&
                          uc.freq.rows() == ds.n_tx && uc.freq.cols() == ds.n_subcarriers,
                      "encode_dataset: channel shape mismatch");
      w.cmat(uc.taps);
      w.cmat(uc.freq);
      w.cmat(rec.estimates[u]);
    }
  }
  w.crc();
  return w.take();
}

channel::Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "dataset");
  r.magic(kDatasetMagic);
  r.version(kDatasetVersion);
  channel::Dataset ds;
  ds.n_tx = static_cast<int>(r.u32());
  ds.n_subcarriers = static_cast<int>(r.u32());
  ds.n_taps = static_cast<int>(r.u32());
  ds.n_users = static_cast<int>(r.u32());
  const std::uint64_t n = r.u64();
  ds.scenario_hash = r.u64();
  const std::uint64_t per_record =
      16 + static_cast<std::uint64_t>(ds.n_users) * 16 *
               (static_cast<std::uint64_t>(ds.n_taps) * ds.n_tx +
                2ULL * ds.n_tx * ds.n_subcarriers);
  if (bytes.size() != r.pos() + n * per_record + 4)
    throw DataFormatError("dataset: length error, expected " +
                          std::to_string(r.pos() + n * per_record + 4) + " bytes, found " +
                          std::to_string(bytes.size()));
  ds.records.resize(n);
  for (auto& rec : ds.records) {
    rec.scenario_id = r.u64();
    rec.sample_index = r.u64();
    for (int u = 0; u < ds.n_users; ++u) {
      channel::UserChannel uc;
      uc.taps = r.cmat(ds.n_taps, ds.n_tx);
      uc.freq = r.cmat(ds.n_tx, ds.n_subcarriers);
      rec.users.push_back(std::move(uc));
      rec.estimates.push_back(r.cmat(ds.n_tx, ds.n_subcarriers));
    }
  }
  r.crc();
  return ds;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_dataset(const channel::Dataset& ds, const std::filesystem::path& path,
                  const channel::ScenarioConfig& scenario) {
  write_file(path, encode_dataset(ds));
  const nlohmann::json side{{"scenario", scenario},
                            {"scenario_hash", ds.scenario_hash},
                            {"n_users", ds.n_users},
                            {"n_samples", ds.records.size()}};
  const std::string text = side.dump(2) + "\n";
  auto sidecar = path;
  sidecar += ".json";
  write_file(sidecar, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

channel::Dataset load_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_dataset(bytes);
}

channel::ScenarioConfig load_dataset_scenario(const std::filesystem::path& path) {
  auto sidecar = path;
  sidecar += ".json";
  const auto bytes = read_file(sidecar);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end())
        .at("scenario")
        .get<channel::ScenarioConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("dataset sidecar " + sidecar.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_decoder(const training::Decoder& decoder,
                                         std::uint32_t version) {
  Writer w;
  w.raw(kCheckpointMagic, 4);
  w.u32(version);
  w.str(training::to_string(decoder.scheme));
  w.str(codebook::tag(decoder.codebook));
  const auto write_refiner = [&](const nn::RefinerArch& a) {
    w.u32(static_cast<std::uint32_t>(a.n_users));
    w.u32(static_cast<std::uint32_t>(a.n_blocks));
    w.u32(static_cast<std::uint32_t>(a.hidden1));
    w.u32(static_cast<std::uint32_t>(a.hidden2));
  };
  nn::ParamList<double> params;
  if (decoder.encdec) {
    auto net = *decoder.encdec;
    const auto& a = net.arch();
    w.u32(static_cast<std::uint32_t>(NetKind::kEncDec));
    write_refiner(a.refiner);
    w.u32(static_cast<std::uint32_t>(a.n_tx));
    w.u32(static_cast<std::uint32_t>(a.n_subcarriers));
    w.u32(static_cast<std::uint32_t>(a.feedback_bits));
    w.u32(static_cast<std::uint32_t>(a.encoder_widths.size()));
    for (int width : a.encoder_widths) w.u32(static_cast<std::uint32_t>(width));
    params = net.params();
    w.u64(count_params(params));
    for (const auto* p : params)
      for (double v : p->value) w.f64(v);
  } else if (decoder.refiner) {
    auto net = *decoder.refiner;
    w.u32(static_cast<std::uint32_t>(NetKind::kRefiner));
    write_refiner(net.arch());
    params = net.params();
    w.u64(count_params(params));
    for (const auto* p : params)
      for (double v : p->value) w.f64(v);
  } else {
    w.u32(static_cast<std::uint32_t>(NetKind::kNone));
    w.u64(0);
  }
  w.crc();
  return w.take();
}

training::Decoder decode_decoder(std::span<const std::uint8_t> bytes) {
  Reader r(bytes, "checkpoint");
  r.magic(kCheckpointMagic);
  r.version(kCheckpointVersion);
  training::Decoder d;
  try {
    d.scheme = training::scheme_from_string(r.str());
    d.codebook = parse_codebook_tag(r.str());
  } catch (const ConfigError& e) {
    throw DataFormatError(std::string("checkpoint: ") + e.what());
  }
  const auto kind = static_cast<NetKind>(r.u32());
  const auto read_refiner = [&] {
    nn::RefinerArch a;
    a.n_users = static_cast<int>(r.u32());
    a.n_blocks = static_cast<int>(r.u32());
    a.hidden1 = static_cast<int>(r.u32());
    a.hidden2 = static_cast<int>(r.u32());
    if (a.n_users < 1 || a.n_users > 64 || a.n_blocks < 1 || a.n_blocks > 64 || a.hidden1 < 1 ||
        a.hidden1 > 4096 || a.hidden2 < 1 || a.hidden2 > 4096)
      throw DataFormatError("checkpoint: implausible refiner descriptor");
    return a;
  };
  const auto read_params = [&](nn::ParamList<double> params) {
    const std::uint64_t n = r.u64();
    if (n != count_params(params))
      throw DataFormatError("checkpoint: parameter count " + std::to_string(n) +
                            " does not match the architecture (" +
                            std::to_string(count_params(params)) + ")");
    r.need(n * 8);
    for (auto* p : params)
      for (double& v : p->value) v = r.f64();
  };
  switch (kind) {
    case NetKind::kNone:
      if (r.u64() != 0) throw DataFormatError("checkpoint: parameters without a network");
      break;
    case NetKind::kRefiner: {
      nn::RefinerNet<double> net(read_refiner());
      read_params(net.params());
      d.refiner = std::move(net);
      break;
    }
    case NetKind::kEncDec: {
      nn::EncDecArch a;
      a.refiner = read_refiner();
      a.n_tx = static_cast<int>(r.u32());
      a.n_subcarriers = static_cast<int>(r.u32());
      a.feedback_bits = static_cast<int>(r.u32());
      const std::uint32_t nw = r.u32();
      if (a.n_tx < 1 || a.n_tx > 4096 || a.n_subcarriers < 1 || a.n_subcarriers > 65536 ||
          a.feedback_bits < 1 || a.feedback_bits > 65536 || nw > 64)
        throw DataFormatError("checkpoint: implausible encoder-decoder descriptor");
      a.encoder_widths.clear();
      for (std::uint32_t i = 0; i < nw; ++i) a.encoder_widths.push_back(static_cast<int>(r.u32()));
      nn::EncDecNet<double> net(a);
      read_params(net.params());
      d.encdec = std::move(net);
      break;
    }
    default:
      throw DataFormatError("checkpoint: unknown network kind");
  }
  r.crc();
  return d;
}

void save_decoder(const training::Decoder& decoder, const std::filesystem::path& path) {
  write_file(path, encode_decoder(decoder));
}

training::Decoder load_decoder(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_decoder(bytes);
}

}  // namespace csiforge::io
