/**
 * @file codebook.cpp
 * @brief Type-I / Type-II codebook implementation.
 */
#include "csiforge/codebook.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

namespace csiforge::codebook {

namespace {

int ceil_log2(std::uint64_t n) {
  int bits = 0;
  while ((std::uint64_t{1} << bits) < n) ++bits;
  return bits;
}

class BitWriter {
 public:
  void put(std::uint64_t value, int width) {
    for (int b = width - 1; b >= 0; --b) {
      const bool bit = (value >> b) & 1u;
      if (n_bits_ % 8 == 0) bytes_.push_back(0);
      if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (n_bits_ % 8));
      ++n_bits_;
    }
  }
  BitString finish() && { return BitString{std::move(bytes_), n_bits_}; }

 private:
  std::vector<std::uint8_t> bytes_;
  int n_bits_ = 0;
};

class BitReader {
 public:
  explicit BitReader(const BitString& bits) : bits_(bits) {}
  std::uint64_t get(int width) {
    std::uint64_t v = 0;
    for (int b = 0; b < width; ++b) {
      if (pos_ >= bits_.n_bits) throw DataFormatError("bitstring exhausted");
      const bool bit = (bits_.bytes[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
      v = (v << 1) | static_cast<std::uint64_t>(bit);
      ++pos_;
    }
    return v;
  }

 private:
  const BitString& bits_;
  int pos_ = 0;
};

int strongest_bits(int n_beams) { return ceil_log2(static_cast<std::uint64_t>(n_beams)); }

}  // namespace

SubbandMap SubbandMap::even(int n_subcarriers, int n_subbands) {
  CSIFORGE_EXPECT(n_subbands >= 1 && n_subbands <= n_subcarriers,
                  "SubbandMap: need 1 <= N_SB <= K");
  SubbandMap m;
  m.n_subcarriers = n_subcarriers;
  m.n_subbands = n_subbands;
  m.first.resize(n_subbands + 1);
  const int base = n_subcarriers / n_subbands;
  const int extra = n_subcarriers % n_subbands;
  m.first[0] = 0;
  for (int s = 0; s < n_subbands; ++s)
    m.first[s + 1] = m.first[s] + base + (s < extra ? 1 : 0);
  m.subband_of.resize(n_subcarriers);
  for (int s = 0; s < n_subbands; ++s)
    for (int k = m.first[s]; k < m.first[s + 1]; ++k) m.subband_of[k] = s;
  return m;
}

void validate(const CodebookConfig& cfg, int n_tx) {
  std::vector<std::string> errs;
  if (const auto* c1 = std::get_if<TypeIConfig>(&cfg)) {
    if (c1->oversampling != 1 && c1->oversampling != 2 && c1->oversampling != 4)
      errs.push_back("oversampling=" + std::to_string(c1->oversampling) +
                     " not in allowed set {1,2,4}");
  } else {
    const auto& c2 = std::get<TypeIIConfig>(cfg);
    if (c2.oversampling != 4)
      errs.push_back("Type-II oversampling=" + std::to_string(c2.oversampling) +
                     " not in allowed set {4}");
    if (c2.n_beams < 1 || c2.n_beams > 4)
      errs.push_back("n_beams=" + std::to_string(c2.n_beams) +
                     " not in allowed set {1,2,3,4}");
    if (c2.n_beams > n_tx) errs.push_back("n_beams must be <= n_tx");
    if (c2.n_subbands < 2 || c2.n_subbands > 4)
      errs.push_back("n_subbands=" + std::to_string(c2.n_subbands) +
                     " not in allowed set {2,3,4}");
  }
  if (!errs.empty()) {
    std::string msg = "invalid codebook config:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

std::string tag(const CodebookConfig& cfg) {
  if (const auto* c1 = std::get_if<TypeIConfig>(&cfg))
    return "typeI-O" + std::to_string(c1->oversampling);
  const auto& c2 = std::get<TypeIIConfig>(cfg);
  return "typeII-O" + std::to_string(c2.oversampling) + "-L" +
         std::to_string(c2.n_beams) + "-SB" + std::to_string(c2.n_subbands);
}

CVec dft_beam(int beam_index, int rotation_index, int oversampling, int n_tx) {
  CSIFORGE_EXPECT(n_tx >= 1 && oversampling >= 1, "dft_beam: bad dimensions");
  CSIFORGE_EXPECT(beam_index >= 0 && beam_index < n_tx,
                  "dft_beam: beam index out of range");
  CSIFORGE_EXPECT(rotation_index >= 0 && rotation_index < oversampling,
                  "dft_beam: rotation index out of range");
  // Phase index kept as an exact integer modulo O*N_t.
  const long long period = static_cast<long long>(oversampling) * n_tx;
  const long long step = static_cast<long long>(beam_index) * oversampling + rotation_index;
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_tx));
  CVec b(n_tx);
  for (int n = 0; n < n_tx; ++n) {
    const long long idx = (step * n) % period;
    b(n) = std::polar(scale, 2.0 * kPi * static_cast<double>(idx) / period);
  }
  return b;
}

double wideband_amplitude(int code) {
  CSIFORGE_EXPECT(code >= 0 && code < 8, "wideband amplitude code out of range");
  if (code == 0) return 0.0;
  return std::sqrt(std::ldexp(1.0, -(7 - code)));
}

double subband_amplitude(int code) {
  CSIFORGE_EXPECT(code == 0 || code == 1, "subband amplitude code out of range");
  return code == 1 ? 1.0 : std::sqrt(0.5);
}

int quantize_wideband_amplitude(double ratio) {
  int best = 0;
  double best_err = std::abs(ratio - wideband_amplitude(0));
  for (int c = 1; c < 8; ++c) {
    const double err = std::abs(ratio - wideband_amplitude(c));
    if (err < best_err) {
      best = c;
      best_err = err;
    }
  }
  return best;
}

int quantize_subband_amplitude(double ratio) {
  return std::abs(ratio - 1.0) < std::abs(ratio - std::sqrt(0.5)) ? 1 : 0;
}

int quantize_phase(double radians) {
  const double step = 2.0 * kPi / 8.0;
  long long q = std::llround(radians / step);
  q %= 8;
  if (q < 0) q += 8;
  return static_cast<int>(q);
}

std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / i;
  return r;
}

std::uint64_t combination_rank(const std::vector<int>& sorted_beams, int n) {
  const int k = static_cast<int>(sorted_beams.size());
  std::uint64_t rank = 0;
  int prev = -1;
  for (int i = 0; i < k; ++i) {
    CSIFORGE_EXPECT(sorted_beams[i] > prev && sorted_beams[i] < n,
                    "combination_rank: beams must be strictly increasing in [0, n)");
    for (int j = prev + 1; j < sorted_beams[i]; ++j)
      rank += binomial(n - j - 1, k - i - 1);
    prev = sorted_beams[i];
  }
  return rank;
}

std::vector<int> combination_unrank(std::uint64_t rank, int n, int k) {
  CSIFORGE_EXPECT(rank < binomial(n, k), "combination_unrank: rank out of range");
  std::vector<int> out;
  out.reserve(k);
  int j = 0;
  for (int i = 0; i < k; ++i) {
    for (;; ++j) {
      const std::uint64_t block = binomial(n - j - 1, k - i - 1);
      if (rank < block) break;
      rank -= block;
    }
    out.push_back(j++);
  }
  return out;
}

TypeIReport typeI_encode(const CMat& h_est, const TypeIConfig& cfg) {
  const int n_tx = static_cast<int>(h_est.rows());
  const int O = cfg.oversampling;
  TypeIReport best{0};
  double best_power = -1.0;
  for (int beam = 0; beam < n_tx; ++beam) {
    for (int r = 0; r < O; ++r) {
      const CVec b = dft_beam(beam, r, O, n_tx);
      const double power = (b.adjoint() * h_est).squaredNorm();
      const int index = beam * O + r;
      if (power > best_power ||
          (power == best_power && index < best.beam_index)) {
        best_power = power;
        best.beam_index = index;
      }
    }
  }
  if (best_power == 0.0) {
    spdlog::warn("typeI_encode: zero channel, reporting beam 0");
    best.beam_index = 0;
  }
  return best;
}

CMat typeI_decode(const TypeIReport& report, const TypeIConfig& cfg, int n_tx,
                  int n_subbands) {
  const int O = cfg.oversampling;
  CSIFORGE_EXPECT(report.beam_index >= 0 && report.beam_index < O * n_tx,
                  "typeI_decode: beam index out of range");
  const CVec b = dft_beam(report.beam_index / O, report.beam_index % O, O, n_tx);
  return b.replicate(1, n_subbands);
}

CMat subband_average(const CMat& h, const SubbandMap& map) {
  CSIFORGE_EXPECT(h.cols() == map.n_subcarriers, "subband_average: K mismatch");
  CMat g(h.rows(), map.n_subbands);
  for (int s = 0; s < map.n_subbands; ++s)
    g.col(s) = h.middleCols(map.first[s], map.size(s)).rowwise().mean();
  return g;
}

TypeIIReport typeII_encode(const CMat& h_est, const TypeIIConfig& cfg,
                           const SubbandMap& map) {
  const int n_tx = static_cast<int>(h_est.rows());
  const int L = cfg.n_beams;
  const int O = cfg.oversampling;
  const int nsb = map.n_subbands;
  CSIFORGE_EXPECT(nsb == cfg.n_subbands, "typeII_encode: subband map mismatch");
  const CMat g = subband_average(h_est, map);

  int best_rot = 0;
  double best_captured = -1.0;
  std::vector<int> best_set;
  CMat best_proj;
  for (int r = 0; r < O; ++r) {
    CMat beams(n_tx, n_tx);
    for (int i = 0; i < n_tx; ++i) beams.col(i) = dft_beam(i, r, O, n_tx);
    const CMat proj = beams.adjoint() * g;  // N_t x N_SB
    const Eigen::VectorXd power = proj.rowwise().squaredNorm();
    std::vector<int> order(n_tx);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return power(a) > power(b); });
    double captured = 0.0;
    for (int i = 0; i < L; ++i) captured += power(order[i]);
    if (captured > best_captured) {
      best_captured = captured;
      best_rot = r;
      best_set.assign(order.begin(), order.begin() + L);
      best_proj = proj;
    }
  }
  std::sort(best_set.begin(), best_set.end());

  TypeIIReport rep;
  rep.rotation = best_rot;
  rep.beam_combo = combination_rank(best_set, n_tx);

  std::vector<double> rms(L);
  for (int i = 0; i < L; ++i)
    rms[i] = std::sqrt(best_proj.row(best_set[i]).squaredNorm() / nsb);
  rep.strongest = 0;
  for (int i = 1; i < L; ++i)
    if (rms[i] > rms[rep.strongest]) rep.strongest = i;
  const double ref = rms[rep.strongest];
  if (ref == 0.0) spdlog::warn("typeII_encode: zero channel");

  std::vector<int> others;
  for (int i = 0; i < L; ++i)
    if (i != rep.strongest) others.push_back(i);
  for (int i : others)
    rep.wideband_amp.push_back(quantize_wideband_amplitude(ref > 0.0 ? rms[i] / ref : 0.0));

  for (int s = 0; s < nsb; ++s) {
    const cd anchor = best_proj(best_set[rep.strongest], s);
    for (std::size_t oi = 0; oi < others.size(); ++oi) {
      const cd c = anchor != cd(0.0, 0.0) ? best_proj(best_set[others[oi]], s) / anchor
                                          : cd(0.0, 0.0);
      const double wb = wideband_amplitude(rep.wideband_amp[oi]);
      rep.subband_amp.push_back(quantize_subband_amplitude(wb > 0.0 ? std::abs(c) / wb : 1.0));
      rep.subband_phase.push_back(quantize_phase(std::arg(c)));
    }
  }
  return rep;
}

std::vector<int> typeII_beams(const TypeIIReport& report, int n_tx, int n_beams) {
  return combination_unrank(report.beam_combo, n_tx, n_beams);
}

CMat typeII_decode(const TypeIIReport& report, const TypeIIConfig& cfg, int n_tx) {
  const int L = cfg.n_beams;
  const int nsb = cfg.n_subbands;
  CSIFORGE_EXPECT(report.rotation >= 0 && report.rotation < cfg.oversampling,
                  "typeII_decode: rotation out of range");
  CSIFORGE_EXPECT(report.strongest >= 0 && report.strongest < L,
                  "typeII_decode: strongest beam out of range");
  CSIFORGE_EXPECT(static_cast<int>(report.wideband_amp.size()) == L - 1 &&
                      static_cast<int>(report.subband_amp.size()) == nsb * (L - 1) &&
                      static_cast<int>(report.subband_phase.size()) == nsb * (L - 1),
                  "typeII_decode: field sizes do not match config");
  const auto beams = typeII_beams(report, n_tx, L);

  CMat w1(n_tx, L);
  for (int i = 0; i < L; ++i)
    w1.col(i) = dft_beam(beams[i], report.rotation, cfg.oversampling, n_tx);

  Eigen::VectorXd wc1(L);
  CMat wc2(L, nsb);
  int oi = 0;
  for (int i = 0; i < L; ++i) {
    if (i == report.strongest) {
      wc1(i) = 1.0;
      wc2.row(i).setOnes();
      continue;
    }
    wc1(i) = wideband_amplitude(report.wideband_amp[oi]);
    for (int s = 0; s < nsb; ++s) {
      const int idx = s * (L - 1) + oi;
      wc2(i, s) = std::polar(subband_amplitude(report.subband_amp[idx]),
                             2.0 * kPi * report.subband_phase[idx] / 8.0);
    }
    ++oi;
  }

  CMat w = w1 * wc1.asDiagonal() * wc2;
  for (int s = 0; s < nsb; ++s) {
    const double norm = w.col(s).norm();
    if (norm > 0.0) {
      w.col(s) /= norm;
    } else {
      spdlog::warn("typeII_decode: subband {} reconstructs to zero", s);
    }
  }
  return w;
}

int overhead_bits(const CodebookConfig& cfg, int n_tx) {
  if (const auto* c1 = std::get_if<TypeIConfig>(&cfg))
    return ceil_log2(static_cast<std::uint64_t>(c1->oversampling) * n_tx);
  const auto& c2 = std::get<TypeIIConfig>(cfg);
  const int L = c2.n_beams;
  return ceil_log2(static_cast<std::uint64_t>(c2.oversampling)) +
         ceil_log2(binomial(n_tx, L)) + strongest_bits(L) +
         (L - 1) * kWidebandAmpBits +
         c2.n_subbands * (L - 1) * (kSubbandAmpBits + kSubbandPhaseBits);
}

BitString pack_bits(const CsiReport& report, const CodebookConfig& cfg, int n_tx) {
  BitWriter w;
  if (const auto* c1 = std::get_if<TypeIConfig>(&cfg)) {
    const auto& r = std::get<TypeIReport>(report);
    w.put(static_cast<std::uint64_t>(r.beam_index),
          ceil_log2(static_cast<std::uint64_t>(c1->oversampling) * n_tx));
    return std::move(w).finish();
  }
  const auto& c2 = std::get<TypeIIConfig>(cfg);
  const auto& r = std::get<TypeIIReport>(report);
  const int L = c2.n_beams;
  w.put(static_cast<std::uint64_t>(r.rotation), ceil_log2(c2.oversampling));
  w.put(r.beam_combo, ceil_log2(binomial(n_tx, L)));
  w.put(static_cast<std::uint64_t>(r.strongest), strongest_bits(L));
  for (int a : r.wideband_amp) w.put(static_cast<std::uint64_t>(a), kWidebandAmpBits);
  for (int a : r.subband_amp) w.put(static_cast<std::uint64_t>(a), kSubbandAmpBits);
  for (int p : r.subband_phase) w.put(static_cast<std::uint64_t>(p), kSubbandPhaseBits);
  return std::move(w).finish();
}

CsiReport unpack_bits(const BitString& bits, const CodebookConfig& cfg, int n_tx) {
  const int expected = overhead_bits(cfg, n_tx);
  if (bits.n_bits != expected)
    throw DataFormatError("unpack_bits: expected " + std::to_string(expected) +
                          " bits, got " + std::to_string(bits.n_bits));
  if (static_cast<int>(bits.bytes.size()) != (expected + 7) / 8)
    throw DataFormatError("unpack_bits: byte length does not match bit count");
  BitReader rd(bits);
  if (const auto* c1 = std::get_if<TypeIConfig>(&cfg)) {
    const auto v = rd.get(expected);
    if (v >= static_cast<std::uint64_t>(c1->oversampling) * n_tx)
      throw DataFormatError("unpack_bits: beam index out of range");
    return TypeIReport{static_cast<int>(v)};
  }
  const auto& c2 = std::get<TypeIIConfig>(cfg);
  const int L = c2.n_beams;
  TypeIIReport r;
  r.rotation = static_cast<int>(rd.get(ceil_log2(c2.oversampling)));
  if (r.rotation >= c2.oversampling) throw DataFormatError("unpack_bits: rotation out of range");
  r.beam_combo = rd.get(ceil_log2(binomial(n_tx, L)));
  if (r.beam_combo >= binomial(n_tx, L))
    throw DataFormatError("unpack_bits: beam combination out of range");
  r.strongest = static_cast<int>(rd.get(strongest_bits(L)));
  if (r.strongest >= L) throw DataFormatError("unpack_bits: strongest beam out of range");
  for (int i = 0; i < L - 1; ++i)
    r.wideband_amp.push_back(static_cast<int>(rd.get(kWidebandAmpBits)));
  for (int i = 0; i < c2.n_subbands * (L - 1); ++i)
    r.subband_amp.push_back(static_cast<int>(rd.get(kSubbandAmpBits)));
  for (int i = 0; i < c2.n_subbands * (L - 1); ++i)
    r.subband_phase.push_back(static_cast<int>(rd.get(kSubbandPhaseBits)));
  return r;
}

CsiReport encode(const CMat& h_est, const CodebookConfig& cfg, const SubbandMap& map) {
  if (const auto* c1 = std::get_if<TypeIConfig>(&cfg)) return typeI_encode(h_est, *c1);
  return typeII_encode(h_est, std::get<TypeIIConfig>(cfg), map);
}

CMat subband_to_subcarrier(const CMat& w, const SubbandMap& map) {
  CSIFORGE_EXPECT(w.cols() == map.n_subbands, "subband_to_subcarrier: N_SB mismatch");
  CMat out(w.rows(), map.n_subcarriers);
  for (int k = 0; k < map.n_subcarriers; ++k) out.col(k) = w.col(map.subband_of[k]);
  return out;
}

CMat decode_to_subcarriers(const CsiReport& report, const CodebookConfig& cfg,
                           int n_tx, const SubbandMap& map) {
  CMat w;
  if (const auto* c1 = std::get_if<TypeIConfig>(&cfg)) {
    w = typeI_decode(std::get<TypeIReport>(report), *c1, n_tx, map.n_subbands);
  } else {
    w = typeII_decode(std::get<TypeIIReport>(report), std::get<TypeIIConfig>(cfg), n_tx);
  }
  return subband_to_subcarrier(w, map);
}

SubbandMap subband_map_for(const CodebookConfig& cfg, int n_subcarriers) {
  if (const auto* c2 = std::get_if<TypeIIConfig>(&cfg))
    return SubbandMap::even(n_subcarriers, c2->n_subbands);
  return SubbandMap::even(n_subcarriers, 1);
}

std::string describe(const CsiReport& report, const CodebookConfig& cfg, int n_tx) {
  std::ostringstream os;
  os << "codebook        " << tag(cfg) << "\n";
  os << "overhead_bits   " << overhead_bits(cfg, n_tx) << "\n";
  if (const auto* c1 = std::get_if<TypeIConfig>(&cfg)) {
    const auto& r = std::get<TypeIReport>(report);
    os << "beam_index      " << r.beam_index << " (beam " << r.beam_index / c1->oversampling
       << ", rotation " << r.beam_index % c1->oversampling << ")\n";
    return os.str();
  }
  const auto& c2 = std::get<TypeIIConfig>(cfg);
  const auto& r = std::get<TypeIIReport>(report);
  const int L = c2.n_beams;
  const auto beams = typeII_beams(r, n_tx, L);
  os << "rotation        " << r.rotation << "\n";
  os << "beam_combo      " << r.beam_combo << " -> {";
  for (int i = 0; i < L; ++i) os << (i ? ", " : "") << beams[i];
  os << "}\n";
  os << "strongest       " << r.strongest << " (beam " << beams[r.strongest] << ")\n";
  os << "wideband_amp   ";
  for (int a : r.wideband_amp) os << " " << a << "(" << wideband_amplitude(a) << ")";
  os << "\n";
  for (int s = 0; s < c2.n_subbands; ++s) {
    os << "subband " << s << "      ";
    for (int i = 0; i < L - 1; ++i) {
      const int idx = s * (L - 1) + i;
      os << " amp=" << r.subband_amp[idx] << " phase=" << r.subband_phase[idx];
    }
    os << "\n";
  }
  const BitString bits = pack_bits(report, cfg, n_tx);
  os << "bits            ";
  for (int b = 0; b < bits.n_bits; ++b)
    os << ((bits.bytes[b / 8] >> (7 - b % 8)) & 1);
  os << "\n";
  return os.str();
}

}  // namespace csiforge::codebook
