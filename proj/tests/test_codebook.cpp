/**
 * @file test_codebook.cpp
 * @brief DFT beams, Type-I/Type-II encode and decode, bit packing and
 * overhead accounting, subband bookkeeping.
 */
#include "csiforge/channel.hpp"
#include "csiforge/codebook.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace csiforge;
using namespace csiforge::codebook;

namespace {

int ceil_log2(std::uint64_t v) {
  int b = 0;
  while ((std::uint64_t{1} << b) < v) ++b;
  return b;
}

/// Field-by-field sum of the documented Type-II layout.
int typeII_formula(int n_tx, int O, int L, int nsb) {
  return ceil_log2(O) + ceil_log2(binomial(n_tx, L)) + ceil_log2(L) + (L - 1) * 3 +
         nsb * (L - 1) * (1 + 3);
}

TypeIIReport random_typeII(const TypeIIConfig& cfg, int n_tx, std::mt19937_64& rng) {
  const int L = cfg.n_beams;
  TypeIIReport r;
  r.rotation = static_cast<int>(rng() % cfg.oversampling);
  r.beam_combo = rng() % binomial(n_tx, L);
  r.strongest = static_cast<int>(rng() % L);
  for (int i = 0; i < L - 1; ++i) r.wideband_amp.push_back(static_cast<int>(rng() % 8));
  for (int i = 0; i < cfg.n_subbands * (L - 1); ++i) {
    r.subband_amp.push_back(static_cast<int>(rng() % 2));
    r.subband_phase.push_back(static_cast<int>(rng() % 8));
  }
  return r;
}

std::vector<CMat> desk_channels(int n, std::uint64_t seed) {
  const auto ds = channel::generate_dataset(channel::desk_scenario(), 1, n, std::nullopt, seed);
  std::vector<CMat> out;
  for (const auto& r : ds.records) out.push_back(r.users[0].freq);
  return out;
}

}  // namespace

TEST(DftBeam, BeamZeroIsFlat) {
  const CVec b = dft_beam(0, 0, 4, 8);
  for (int n = 0; n < 8; ++n) EXPECT_NEAR(std::abs(b(n) - cd(1.0 / std::sqrt(8.0), 0)), 0, 1e-15);
}

TEST(DftBeam, SameRotationBeamsAreOrthogonal) {
  EXPECT_LT(std::abs(dft_beam(0, 0, 1, 16).dot(dft_beam(1, 0, 1, 16))), 1e-12);
  EXPECT_LT(std::abs(dft_beam(3, 2, 4, 16).dot(dft_beam(9, 2, 4, 16))), 1e-12);
}

TEST(DftBeam, MatchesElementFormula) {
  const CVec b = dft_beam(3, 2, 4, 8);
  for (int n = 0; n < 8; ++n) {
    const cd ref = std::exp(cd(0.0, 2.0 * oracle::kPi * n * (3.0 + 2.0 / 4.0) / 8.0)) /
                   std::sqrt(8.0);
    EXPECT_LT(std::abs(b(n) - ref), 1e-12);
  }
}

TEST(DftBeam, OutOfRangeIndexIsContractViolation) {
  EXPECT_THROW(dft_beam(8, 0, 1, 8), ContractViolation);
  EXPECT_THROW(dft_beam(0, 4, 4, 8), ContractViolation);
}

TEST(Overhead, TypeIMatchesTableOne) {
  EXPECT_EQ(overhead_bits(TypeIConfig{1}, 32), 5);
  EXPECT_EQ(overhead_bits(TypeIConfig{2}, 32), 6);
  EXPECT_EQ(overhead_bits(TypeIConfig{4}, 32), 7);
  EXPECT_EQ(overhead_bits(TypeIConfig{1}, 16), 4);
}

TEST(Overhead, TypeIIMatchesFieldLayout) {
  for (int n_tx : {8, 16, 32})
    for (int L : {1, 2, 3, 4})
      for (int nsb : {2, 3, 4})
        EXPECT_EQ(overhead_bits(TypeIIConfig{4, L, nsb}, n_tx), typeII_formula(n_tx, 4, L, nsb))
            << n_tx << " " << L << " " << nsb;
  EXPECT_EQ(overhead_bits(TypeIIConfig{4, 2, 2}, 16), 21);
}

TEST(Overhead, TypeIIMatchesTableOneBudgets) {
  EXPECT_EQ(overhead_bits(TypeIIConfig{4, 2, 2}, 32), 23);
  EXPECT_EQ(overhead_bits(TypeIIConfig{4, 3, 3}, 32), 47);
  EXPECT_EQ(overhead_bits(TypeIIConfig{4, 4, 4}, 32), 77);
}

TEST(Packing, PackedLengthEqualsOverhead) {
  EXPECT_EQ(pack_bits(TypeIReport{0}, TypeIConfig{1}, 32).n_bits, 5);
  EXPECT_EQ(pack_bits(TypeIReport{127}, TypeIConfig{4}, 32).n_bits, 7);
  std::mt19937_64 rng(1);
  const TypeIIConfig cfg{4, 3, 3};
  const auto bits = pack_bits(random_typeII(cfg, 32, rng), cfg, 32);
  EXPECT_EQ(bits.n_bits, 47);
  EXPECT_EQ(bits.bytes.size(), 6u);
}

TEST(Packing, RandomReportsRoundTrip) {
  std::mt19937_64 rng(2024);
  int failures = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n_tx = (i % 3 == 0) ? 32 : 16;
    if (i % 2 == 0) {
      const TypeIConfig cfg{1 << (i % 3)};
      const TypeIReport r{static_cast<int>(rng() % (cfg.oversampling * n_tx))};
      if (std::get<TypeIReport>(unpack_bits(pack_bits(r, cfg, n_tx), cfg, n_tx)) != r) ++failures;
    } else {
      const TypeIIConfig cfg{4, 2 + static_cast<int>(rng() % 3), 2 + static_cast<int>(rng() % 3)};
      const TypeIIReport r = random_typeII(cfg, n_tx, rng);
      if (std::get<TypeIIReport>(unpack_bits(pack_bits(r, cfg, n_tx), cfg, n_tx)) != r) ++failures;
    }
  }
  EXPECT_EQ(failures, 0);
}

TEST(Packing, TrailingBitsAreZero) {
  const auto bits = pack_bits(TypeIReport{31}, TypeIConfig{1}, 32);
  ASSERT_EQ(bits.bytes.size(), 1u);
  EXPECT_EQ(bits.bytes[0], 0xF8);  // 11111 then three zero pad bits
}

TEST(Packing, WrongLengthIsDataFormatError) {
  auto bits = pack_bits(TypeIReport{3}, TypeIConfig{2}, 32);
  bits.n_bits = 5;
  EXPECT_THROW(unpack_bits(bits, TypeIConfig{2}, 32), DataFormatError);
}

TEST(Packing, OutOfRangeComboIsDataFormatError) {
  // C(16, 2) = 120 fits in 7 bits, so index 127 is invalid.
  const TypeIIConfig cfg{4, 2, 2};
  std::mt19937_64 rng(3);
  TypeIIReport r = random_typeII(cfg, 16, rng);
  auto bits = pack_bits(r, cfg, 16);
  // The combo field follows the 2 rotation bits.
  bits.bytes[0] |= 0x3F;
  bits.bytes[1] |= 0x80;
  EXPECT_THROW(unpack_bits(bits, cfg, 16), DataFormatError);
}

TEST(Combinations, FirstSetHasRankZero) {
  EXPECT_EQ(combination_rank({0, 1}, 16), 0u);
}

TEST(Combinations, RankIsBijective) {
  for (int L = 1; L <= 4; ++L) {
    const std::uint64_t total = binomial(10, L);
    for (std::uint64_t r = 0; r < total; ++r) {
      const auto set = combination_unrank(r, 10, L);
      ASSERT_EQ(static_cast<int>(set.size()), L);
      EXPECT_TRUE(std::is_sorted(set.begin(), set.end()));
      EXPECT_EQ(combination_rank(set, 10), r);
    }
  }
}

TEST(TypeI, ExactCodewordIsSelected) {
  const CMat h = dft_beam(5, 0, 1, 16).replicate(1, 12);
  EXPECT_EQ(typeI_encode(h, TypeIConfig{1}).beam_index, 5);
}

TEST(TypeI, SelectionMaximizesExhaustiveObjective) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const CMat h = oracle::random_cmat(16, 12, rng);
    for (int O : {1, 2, 4}) {
      double best = -1.0;
      for (int beam = 0; beam < 16; ++beam)
        for (int r = 0; r < O; ++r) {
          const CVec b = dft_beam(beam, r, O, 16);
          double p = 0.0;
          for (int k = 0; k < h.cols(); ++k) p += std::norm(b.dot(h.col(k)));
          best = std::max(best, p);
        }
      const auto rep = typeI_encode(h, TypeIConfig{O});
      const CVec b = dft_beam(rep.beam_index / O, rep.beam_index % O, O, 16);
      double chosen = 0.0;
      for (int k = 0; k < h.cols(); ++k) chosen += std::norm(b.dot(h.col(k)));
      EXPECT_NEAR(chosen, best, 1e-9 * best);
    }
  }
}

TEST(TypeI, DecodeGivesUnitColumns) {
  const CMat w = typeI_decode(TypeIReport{0}, TypeIConfig{1}, 8, 3);
  for (int s = 0; s < 3; ++s)
    for (int n = 0; n < 8; ++n) EXPECT_NEAR(std::abs(w(n, s) - 1.0 / std::sqrt(8.0)), 0, 1e-15);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const TypeIReport r{static_cast<int>(rng() % 64)};
    const CMat wr = typeI_decode(r, TypeIConfig{4}, 16, 4);
    for (int s = 0; s < 4; ++s) EXPECT_NEAR(wr.col(s).norm(), 1.0, 1e-12);
  }
}

TEST(TypeI, EncodeDecodeOfCodewordIsThatCodeword) {
  const CVec b = dft_beam(7, 3, 4, 16);
  const CMat h = (b * cd(2.0, 1.0)).replicate(1, 10);
  const auto rep = typeI_encode(h, TypeIConfig{4});
  const CMat w = typeI_decode(rep, TypeIConfig{4}, 16, 2);
  for (int s = 0; s < 2; ++s) EXPECT_NEAR(std::abs(b.dot(w.col(s))), 1.0, 1e-12);
}

TEST(TypeII, SingleBeamChannel) {
  const TypeIIConfig cfg{4, 2, 2};
  const auto map = SubbandMap::even(24, 2);
  const CMat h = dft_beam(2, 0, 4, 16).replicate(1, 24);
  const auto rep = typeII_encode(h, cfg, map);
  const auto beams = typeII_beams(rep, 16, 2);
  EXPECT_EQ(rep.rotation, 0);
  EXPECT_EQ(beams[rep.strongest], 2);
  ASSERT_EQ(rep.wideband_amp.size(), 1u);
  EXPECT_EQ(rep.wideband_amp[0], 0);  // companion carries only the leakage floor
  const CMat w = typeII_decode(rep, cfg, 16);
  for (int s = 0; s < 2; ++s)
    EXPECT_NEAR(std::abs(dft_beam(2, 0, 4, 16).dot(w.col(s))), 1.0, 1e-12);
}

TEST(TypeII, SelectionMaximizesCapturedPower) {
  std::mt19937_64 rng(23);
  const auto map = SubbandMap::even(24, 3);
  for (int L : {2, 3}) {
    for (int trial = 0; trial < 6; ++trial) {
      const CMat h = oracle::random_cmat(16, 24, rng);
      const CMat g = subband_average(h, map);
      double best = -1.0;
      for (int r = 0; r < 4; ++r)
        for (std::uint64_t c = 0; c < binomial(16, L); ++c) {
          double p = 0.0;
          for (int beam : combination_unrank(c, 16, L))
            p += (dft_beam(beam, r, 4, 16).adjoint() * g).squaredNorm();
          best = std::max(best, p);
        }
      const auto rep = typeII_encode(h, TypeIIConfig{4, L, 3}, map);
      double chosen = 0.0;
      for (int beam : typeII_beams(rep, 16, L))
        chosen += (dft_beam(beam, rep.rotation, 4, 16).adjoint() * g).squaredNorm();
      EXPECT_NEAR(chosen, best, 1e-9 * best);
    }
  }
}

TEST(TypeII, HandBuiltReportDecodesToProduct) {
  const TypeIIConfig cfg{4, 2, 2};
  TypeIIReport r;
  r.rotation = 1;
  r.beam_combo = combination_rank({3, 9}, 16);
  r.strongest = 1;              // beam 9
  r.wideband_amp = {5};         // sqrt(2^-2) = 0.5
  r.subband_amp = {1, 0};       // 1, sqrt(0.5)
  r.subband_phase = {2, 7};     // pi/2, 7pi/4
  const CVec b3 = dft_beam(3, 1, 4, 16), b9 = dft_beam(9, 1, 4, 16);
  const double amps[2] = {1.0, std::sqrt(0.5)};
  const double phases[2] = {oracle::kPi / 2, 7 * oracle::kPi / 4};
  const CMat w = typeII_decode(r, cfg, 16);
  for (int s = 0; s < 2; ++s) {
    CVec ref = b9 + 0.5 * amps[s] * std::exp(cd(0.0, phases[s])) * b3;
    ref /= ref.norm();
    EXPECT_LT((w.col(s) - ref).norm(), 1e-12);
  }
}

TEST(TypeII, SingleBeamConfigDecodesToThatBeam) {
  const TypeIIConfig cfg{4, 1, 2};
  TypeIIReport r;
  r.rotation = 2;
  r.beam_combo = 6;
  const CMat w = typeII_decode(r, cfg, 16);
  for (int s = 0; s < 2; ++s) {
    EXPECT_NEAR(w.col(s).norm(), 1.0, 1e-12);
    EXPECT_LT((w.col(s) - dft_beam(6, 2, 4, 16)).norm(), 1e-12);
  }
}

TEST(TypeII, DecodedColumnsHaveUnitNorm) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 100; ++i) {
    const TypeIIConfig cfg{4, 2 + static_cast<int>(i % 3), 2 + static_cast<int>(i % 3)};
    auto r = random_typeII(cfg, 16, rng);
    r.wideband_amp.assign(r.wideband_amp.size(), 7);
    const CMat w = typeII_decode(r, cfg, 16);
    for (int s = 0; s < cfg.n_subbands; ++s) EXPECT_NEAR(w.col(s).norm(), 1.0, 1e-12);
  }
}

TEST(Encoding, ScaleInvariant) {
  std::mt19937_64 rng(5);
  const cd c = std::polar(2.5, 0.7);
  const auto map = SubbandMap::even(48, 4);
  for (int i = 0; i < 50; ++i) {
    const CMat h = oracle::random_cmat(16, 48, rng);
    EXPECT_EQ(typeI_encode(h, TypeIConfig{4}), typeI_encode(c * h, TypeIConfig{4}));
    EXPECT_EQ(typeII_encode(h, TypeIIConfig{4, 3, 4}, map),
              typeII_encode(c * h, TypeIIConfig{4, 3, 4}, map));
  }
}

TEST(Encoding, FidelityNonDecreasingInBeams) {
  const auto channels = desk_channels(500, 77);
  const auto map = SubbandMap::even(48, 4);
  double prev = 0.0;
  for (int L : {1, 2, 3, 4}) {
    double total = 0.0;
    for (const auto& h : channels) {
      const CMat g = subband_average(h, map);
      const CMat w = typeII_decode(typeII_encode(h, TypeIIConfig{4, L, 4}, map),
                                   TypeIIConfig{4, L, 4}, 16);
      for (int s = 0; s < 4; ++s) total += std::abs(w.col(s).dot(g.col(s))) / g.col(s).norm();
    }
    const double mean = total / (4.0 * channels.size());
    EXPECT_GE(mean, prev) << "L=" << L;
    prev = mean;
  }
}

TEST(Subbands, EvenSplitIsContiguousAndBalanced) {
  const auto m = SubbandMap::even(50, 4);
  EXPECT_EQ(m.first.front(), 0);
  EXPECT_EQ(m.first.back(), 50);
  int lo = 1000, hi = 0;
  for (int s = 0; s < 4; ++s) {
    lo = std::min(lo, m.size(s));
    hi = std::max(hi, m.size(s));
    for (int k = m.first[s]; k < m.first[s + 1]; ++k) EXPECT_EQ(m.subband_of[k], s);
  }
  EXPECT_LE(hi - lo, 1);
  const auto prb = SubbandMap::even(48, 4);
  for (int s = 0; s < 4; ++s) EXPECT_EQ(prb.size(s), 12);
}

TEST(Subbands, SingleSubbandRepeatsColumn) {
  std::mt19937_64 rng(1);
  const CMat w = oracle::random_cmat(4, 1, rng);
  const CMat out = subband_to_subcarrier(w, SubbandMap::even(10, 1));
  for (int k = 0; k < 10; ++k) EXPECT_EQ(out.col(k), w.col(0));
}

TEST(Subbands, TwoSubbandExpansion) {
  std::mt19937_64 rng(2);
  const CMat w = oracle::random_cmat(3, 2, rng);
  const CMat out = subband_to_subcarrier(w, SubbandMap::even(4, 2));
  EXPECT_EQ(out.col(0), w.col(0));
  EXPECT_EQ(out.col(1), w.col(0));
  EXPECT_EQ(out.col(2), w.col(1));
  EXPECT_EQ(out.col(3), w.col(1));
}

TEST(Subbands, PiecewiseConstantRoundTrip) {
  std::mt19937_64 rng(3);
  const auto map = SubbandMap::even(48, 4);
  const CMat w = oracle::random_cmat(16, 4, rng);
  EXPECT_LT((subband_average(subband_to_subcarrier(w, map), map) - w).norm(), 1e-14);
}

TEST(Config, InvalidValuesNameAllowedSet) {
  try {
    validate(TypeIConfig{3}, 32);
    FAIL() << "oversampling 3 accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("{1,2,4}"), std::string::npos) << e.what();
  }
  EXPECT_THROW(validate(TypeIIConfig{4, 5, 2}, 16), ConfigError);
  EXPECT_THROW(validate(TypeIIConfig{4, 2, 5}, 16), ConfigError);
  EXPECT_NO_THROW(validate(TypeIIConfig{4, 4, 4}, 16));
}

TEST(Tags, RoundTripNames) {
  EXPECT_EQ(tag(TypeIConfig{4}), "typeI-O4");
  EXPECT_EQ(tag(TypeIIConfig{4, 2, 2}), "typeII-O4-L2-SB2");
}
