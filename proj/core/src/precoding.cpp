#include "csiforge/precoding.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

namespace csiforge::precoding {

namespace {

void check_shapes(std::span<const CMat> channels) {
  CSIFORGE_EXPECT(!channels.empty(), "need at least one user channel");
  for (const auto& h : channels)
    CSIFORGE_EXPECT(h.rows() == channels[0].rows() && h.cols() == channels[0].cols(),
                    "user channels must share N_t x K");
}

}  // namespace

PrecoderSet zero_forcing(std::span<const CMat> channels, double power) {
  check_shapes(channels);
  CSIFORGE_EXPECT(power > 0.0, "zero_forcing: power must be positive");
  const int U = static_cast<int>(channels.size());
  const int n_tx = static_cast<int>(channels[0].rows());
  const int K = static_cast<int>(channels[0].cols());
  CSIFORGE_EXPECT(U <= n_tx, "zero_forcing: needs U <= N_t");

  PrecoderSet out;
  out.power = power;
  out.per_subcarrier.resize(K);
  out.dropped_users.assign(K, 0);

  CMat h(n_tx, U);
  for (int k = 0; k < K; ++k) {
    for (int u = 0; u < U; ++u) h.col(u) = channels[u].col(k);

    // Users whose channel lies (numerically) in the span of earlier ones.
    std::vector<int> active;
    CMat basis(n_tx, U);
    int rank = 0;
    for (int u = 0; u < U; ++u) {
      CVec r = h.col(u);
      const double norm = r.norm();
      for (int b = 0; b < rank; ++b) r -= basis.col(b) * basis.col(b).dot(r);
      const double res = r.norm();
      if (norm > 0.0 && res > kDependenceTolerance * norm) {
        basis.col(rank++) = r / res;
        active.push_back(u);
      }
    }

    CMat f = CMat::Zero(n_tx, U);
    const int A = static_cast<int>(active.size());
    out.dropped_users[k] = U - A;
    if (A > 0) {
      CMat ha(n_tx, A);
      for (int i = 0; i < A; ++i) ha.col(i) = h.col(active[i]);
      CMat gram = ha.adjoint() * ha;
      const double eps = kRegularization * gram.diagonal().real().mean();
      gram.diagonal().array() += eps;
      const CMat fa = ha * gram.llt().solve(CMat::Identity(A, A));
      const double per_user = std::sqrt(power / A);
      for (int i = 0; i < A; ++i) f.col(active[i]) = fa.col(i).normalized() * per_user;
    }
    out.per_subcarrier[k] = std::move(f);
  }

  int total_dropped = 0;
  for (int d : out.dropped_users) total_dropped += d;
  if (total_dropped > 0)
    spdlog::debug("zero_forcing: {} user-subcarrier pairs dropped as dependent",
                  total_dropped);
  return out;
}

double sum_rate(std::span<const CMat> true_channels, const PrecoderSet& precoders,
                double noise_power) {
  check_shapes(true_channels);
  CSIFORGE_EXPECT(noise_power > 0.0, "sum_rate: noise power must be positive");
  const int U = static_cast<int>(true_channels.size());
  const int K = static_cast<int>(true_channels[0].cols());
  CSIFORGE_EXPECT(precoders.n_subcarriers() == K, "sum_rate: K mismatch");

  double total = 0.0;
  CMat h(true_channels[0].rows(), U);
  for (int k = 0; k < K; ++k) {
    const CMat& f = precoders.per_subcarrier[k];
    CSIFORGE_EXPECT(f.cols() == U && f.rows() == h.rows(), "sum_rate: precoder shape");
    for (int u = 0; u < U; ++u) h.col(u) = true_channels[u].col(k);
    const Eigen::MatrixXd g = (h.adjoint() * f).cwiseAbs2();  // g(u, v) = |h_u^H f_v|^2
    for (int u = 0; u < U; ++u) {
      const double interference = g.row(u).sum() - g(u, u);
      total += std::log2(1.0 + g(u, u) / (interference + noise_power));
    }
  }
  return total / K;
}

double single_user_rate(const CMat& h, const CMat& w, double noise_power) {
  CSIFORGE_EXPECT(h.rows() == w.rows() && h.cols() == w.cols(),
                  "single_user_rate: shape mismatch");
  CSIFORGE_EXPECT(noise_power > 0.0, "single_user_rate: noise power must be positive");
  double total = 0.0;
  for (Eigen::Index k = 0; k < h.cols(); ++k)
    total += std::log2(1.0 + std::norm(h.col(k).dot(w.col(k))) / noise_power);
  return total / static_cast<double>(h.cols());
}

CMat scale_columns_to_power(const CMat& w, double power) {
  CMat out = w;
  const double amp = std::sqrt(power);
  for (Eigen::Index k = 0; k < out.cols(); ++k) {
    const double n = out.col(k).norm();
    if (n > 0.0) out.col(k) *= amp / n;
  }
  return out;
}

double genie_zf_rate(std::span<const CMat> true_channels, double power,
                     double noise_power) {
  return sum_rate(true_channels, zero_forcing(true_channels, power), noise_power);
}

}  // namespace csiforge::precoding
