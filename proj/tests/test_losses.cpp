/**
 * @file test_losses.cpp
 * @brief Training objectives: values against the precoding module and
 * scalar loops, gradients against central differences.
 */
#include "csiforge/nn/losses.hpp"
#include "csiforge/precoding.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace csiforge;
using namespace csiforge::nn;
using gradcheck::random_tensor;

namespace {

struct Truths {
  std::vector<CMat> h;
  std::vector<const CMat*> ptrs;
  std::span<const CMat* const> span() const { return ptrs; }
};

Truths make_truths(int count, int n_tx, int K, std::mt19937_64& rng) {
  Truths t;
  for (int i = 0; i < count; ++i) t.h.push_back(oracle::random_cmat(n_tx, K, rng));
  for (const auto& h : t.h) t.ptrs.push_back(&h);
  return t;
}

}  // namespace

TEST(LossE2e, ValueIsNegativeMeanSumRate) {
  std::mt19937_64 rng(1);
  const int N = 3, U = 2, Nt = 4, K = 5;
  const auto tr = make_truths(N * U, Nt, K, rng);
  const auto out = random_tensor(2 * U, N, Nt, K, rng);
  const double P = 2.0, noise = 0.3;
  double ref = 0.0;
  for (int n = 0; n < N; ++n) {
    const std::vector<CMat> h{tr.h[n * U], tr.h[n * U + 1]};
    ref += precoding::sum_rate(h, output_to_precoders(out, n, P), noise);
    // Independent normalization: F_k = sqrt(P) G_k / ||G_k||_F.
    std::vector<CMat> f;
    for (int k = 0; k < K; ++k) {
      CMat g(Nt, U);
      for (int u = 0; u < U; ++u)
        for (int i = 0; i < Nt; ++i) g(i, u) = cd(out.at(2 * u, n, i, k), out.at(2 * u + 1, n, i, k));
      f.push_back(g * (std::sqrt(P) / g.norm()));
    }
    EXPECT_NEAR(precoding::sum_rate(h, output_to_precoders(out, n, P), noise),
                oracle::sum_rate(h, f, noise), 1e-12);
  }
  EXPECT_NEAR(loss_e2e(out, tr.span(), P, noise).value, -ref / N, 1e-12);
}

TEST(LossE2e, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(2);
  const int N = 2, U = 2, Nt = 4, K = 3;
  const auto tr = make_truths(N * U, Nt, K, rng);
  const auto st = gradcheck::check_loss(
      [&](const Tensor<double>& o) { return loss_e2e(o, tr.span(), 1.0, 0.5); },
      random_tensor(2 * U, N, Nt, K, rng), 60, rng, "e2e");
  EXPECT_TRUE(st.ok()) << st.worst;
}

TEST(LossE2e, ZeroOutputGivesZeroRateAndFiniteGradient) {
  std::mt19937_64 rng(3);
  const auto tr = make_truths(2, 4, 3, rng);
  const auto res = loss_e2e(Tensor<double>(4, 1, 4, 3), tr.span(), 1.0, 0.5);
  EXPECT_EQ(res.value, 0.0);
  for (double g : res.grad.data) EXPECT_TRUE(std::isfinite(g));
  const auto set = output_to_precoders(Tensor<double>(4, 1, 4, 3), 0, 1.0);
  for (int d : set.dropped_users) EXPECT_EQ(d, 2);
}

TEST(LossE2e, FloatAndDoubleAgree) {
  std::mt19937_64 rng(4);
  const auto tr = make_truths(4, 4, 6, rng);
  const auto out = random_tensor(4, 2, 4, 6, rng);
  const auto a = loss_e2e(out, tr.span(), 1.0, 0.2);
  const auto b = loss_e2e(out.cast<float>(), tr.span(), 1.0, 0.2);
  EXPECT_NEAR(a.value, b.value, 1e-5 * std::abs(a.value));
}

TEST(LossE2e, ScaleInvariantOutput) {
  std::mt19937_64 rng(5);
  const auto tr = make_truths(2, 4, 3, rng);
  auto out = random_tensor(4, 1, 4, 3, rng);
  const double v = loss_e2e(out, tr.span(), 1.0, 0.2).value;
  for (auto& x : out.data) x *= 3.7;
  EXPECT_NEAR(loss_e2e(out, tr.span(), 1.0, 0.2).value, v, 1e-12);
}

TEST(LossE2e, WrongTruthCountIsContractViolation) {
  std::mt19937_64 rng(6);
  const auto tr = make_truths(3, 4, 3, rng);
  EXPECT_THROW(loss_e2e(Tensor<double>(4, 2, 4, 3), tr.span(), 1.0, 0.2), ContractViolation);
}

TEST(LossTsRate, ValueIsNegativeSingleUserRate) {
  std::mt19937_64 rng(7);
  const int N = 3, Nt = 4, K = 5;
  const auto tr = make_truths(N, Nt, K, rng);
  const auto out = random_tensor(2, N, Nt, K, rng);
  const double P = 1.5, noise = 0.4;
  double ref = 0.0;
  for (int n = 0; n < N; ++n) {
    const CMat w = tensor_to_complex(out, n)[0];
    ref += oracle::single_user_rate(tr.h[n], precoding::scale_columns_to_power(w, P), noise);
  }
  EXPECT_NEAR(loss_ts_rate(out, tr.span(), P, noise).value, -ref / N, 1e-12);
}

TEST(LossTsRate, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(8);
  const auto tr = make_truths(3, 4, 4, rng);
  const auto st = gradcheck::check_loss(
      [&](const Tensor<double>& o) { return loss_ts_rate(o, tr.span(), 1.0, 0.5); },
      random_tensor(2, 3, 4, 4, rng), 60, rng, "ts_rate");
  EXPECT_TRUE(st.ok()) << st.worst;
}

TEST(LossTsRate, ZeroOutputGivesZeroRate) {
  std::mt19937_64 rng(14);
  const auto tr = make_truths(2, 4, 3, rng);
  const auto res = loss_ts_rate(Tensor<double>(2, 2, 4, 3), tr.span(), 1.0, 0.5);
  EXPECT_EQ(res.value, 0.0);
  for (double g : res.grad.data) EXPECT_EQ(g, 0.0);
}

TEST(Mapping, PrecodersMeetPowerWithEquality) {
  std::mt19937_64 rng(15);
  const auto out = random_tensor(4, 3, 4, 5, rng, 7.0);
  for (int n = 0; n < 3; ++n) {
    const auto set = output_to_precoders(out, n, 2.5);
    for (const auto& f : set.per_subcarrier) EXPECT_NEAR(f.squaredNorm(), 2.5, 1e-12);
    for (int d : set.dropped_users) EXPECT_EQ(d, 0);
  }
}

TEST(LossTsRecon, MatchesDoubleLoop) {
  std::mt19937_64 rng(9);
  const int N = 3, Nt = 4, K = 5;
  const auto tr = make_truths(N, Nt, K, rng);
  const auto out = random_tensor(2, N, Nt, K, rng);
  double ref = 0.0;
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k) {
      double hn = 0.0;
      for (int i = 0; i < Nt; ++i) hn += std::norm(tr.h[n](i, k));
      hn = std::sqrt(hn);
      for (int i = 0; i < Nt; ++i)
        ref += std::norm(cd(out.at(0, n, i, k), out.at(1, n, i, k)) - tr.h[n](i, k) / hn);
    }
  EXPECT_NEAR(loss_ts_recon(out, tr.span()).value, ref / N, 1e-12);
}

TEST(LossTsRecon, ZeroOutputCostsOnePerSubcarrier) {
  std::mt19937_64 rng(10);
  const auto tr = make_truths(2, 4, 7, rng);
  EXPECT_NEAR(loss_ts_recon(Tensor<double>(2, 2, 4, 7), tr.span()).value, 7.0, 1e-12);
}

TEST(LossTsRecon, PerfectOutputCostsZero) {
  std::mt19937_64 rng(11);
  const auto tr = make_truths(1, 4, 3, rng);
  CMat w = tr.h[0];
  for (int k = 0; k < 3; ++k) w.col(k).normalize();
  const auto out = complex_to_tensor(std::span<const CMat>(&w, 1));
  const auto res = loss_ts_recon(out, tr.span());
  EXPECT_NEAR(res.value, 0.0, 1e-24);
}

TEST(LossTsRecon, ZeroChannelColumnsAreExcluded) {
  std::mt19937_64 rng(12);
  auto tr = make_truths(1, 4, 3, rng);
  tr.h[0].col(1).setZero();
  const auto res = loss_ts_recon(Tensor<double>(2, 1, 4, 3), tr.span());
  EXPECT_NEAR(res.value, 2.0, 1e-12);
}

TEST(LossTsRecon, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(13);
  const auto tr = make_truths(2, 4, 4, rng);
  const auto st = gradcheck::check_loss(
      [&](const Tensor<double>& o) { return loss_ts_recon(o, tr.span()); },
      random_tensor(2, 2, 4, 4, rng), 40, rng, "ts_recon");
  EXPECT_TRUE(st.ok()) << st.worst;
}
