#include "csiforge/nn/losses.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <numbers>

namespace csiforge::nn {

namespace {

template <typename T>
CMat column_block(const Tensor<T>& out, int item, int k) {
  // N_t x U matrix of subcarrier k.
  const int U = out.channels / 2;
  CMat g(out.height, U);
  for (int u = 0; u < U; ++u)
    for (int i = 0; i < out.height; ++i)
      g(i, u) = cd(static_cast<double>(out.at(2 * u, item, i, k)),
                   static_cast<double>(out.at(2 * u + 1, item, i, k)));
  return g;
}

template <typename T>
void store_grad(Tensor<T>& grad, int item, int k, const CMat& g) {
  for (Eigen::Index u = 0; u < g.cols(); ++u)
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      grad.at(2 * static_cast<int>(u), item, static_cast<int>(i), k) +=
          static_cast<T>(g(i, u).real());
      grad.at(2 * static_cast<int>(u) + 1, item, static_cast<int>(i), k) +=
          static_cast<T>(g(i, u).imag());
    }
}

}  // namespace

template <typename T>
precoding::PrecoderSet output_to_precoders(const Tensor<T>& out, int item, double power) {
  CSIFORGE_EXPECT(out.channels % 2 == 0, "output_to_precoders: odd channel count");
  precoding::PrecoderSet set;
  set.power = power;
  set.per_subcarrier.resize(out.width);
  set.dropped_users.assign(out.width, 0);
  for (int k = 0; k < out.width; ++k) {
    CMat f = column_block(out, item, k);
    const double n = f.norm();
    if (n > 0.0) {
      f *= std::sqrt(power) / n;
    } else {
      set.dropped_users[k] = static_cast<int>(f.cols());
    }
    set.per_subcarrier[k] = std::move(f);
  }
  return set;
}

template <typename T>
LossResult<T> loss_e2e(const Tensor<T>& out, std::span<const CMat* const> truths,
                       double power, double noise_power) {
  const int U = out.channels / 2;
  const int N = out.batch;
  const int K = out.width;
  CSIFORGE_EXPECT(static_cast<int>(truths.size()) == N * U, "loss_e2e: need N*U truths");
  CSIFORGE_EXPECT(noise_power > 0.0, "loss_e2e: noise power must be positive");

  LossResult<T> res;
  res.grad = Tensor<T>(out.channels, N, out.height, out.width);
  const double inv_ln2 = 1.0 / std::numbers::ln2;
  const double scale = 1.0 / (static_cast<double>(K) * N);
  const double amp = std::sqrt(power);
  double total = 0.0;

  CMat h(out.height, U);
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      const CMat g = column_block(out, n, k);
      const double gn = g.norm();
      if (gn == 0.0) continue;
      const CMat f = g * (amp / gn);
      for (int u = 0; u < U; ++u) h.col(u) = truths[n * U + u]->col(k);
      const CMat z = h.adjoint() * f;  // z(u, v) = h_u^H f_v
      const Eigen::MatrixXd z2 = z.cwiseAbs2();

      CMat grad_f = CMat::Zero(f.rows(), U);
      for (int u = 0; u < U; ++u) {
        const double t = z2.row(u).sum() + noise_power;
        const double nterm = t - z2(u, u);
        total += std::log2(t / nterm);
        for (int v = 0; v < U; ++v) {
          const double c = inv_ln2 * (1.0 / t - (v != u ? 1.0 / nterm : 0.0));
          grad_f.col(v) += (2.0 * c) * z(u, v) * h.col(u);
        }
      }
      // Loss is -rate, then chain through F = sqrt(P) G / ||G||.
      grad_f *= -scale;
      double re_inner = 0.0;
      for (Eigen::Index i = 0; i < g.size(); ++i)
        re_inner += (std::conj(g.data()[i]) * grad_f.data()[i]).real();
      const CMat grad_g = (amp / gn) * (grad_f - g * (re_inner / (gn * gn)));
      store_grad(res.grad, n, k, grad_g);
    }
  }
  res.value = -total * scale;
  return res;
}

template <typename T>
LossResult<T> loss_ts_rate(const Tensor<T>& out, std::span<const CMat* const> truths,
                           double power, double noise_power) {
  CSIFORGE_EXPECT(out.channels == 2, "loss_ts_rate: expects a single-user output");
  const int N = out.batch;
  const int K = out.width;
  CSIFORGE_EXPECT(static_cast<int>(truths.size()) == N, "loss_ts_rate: need N truths");
  CSIFORGE_EXPECT(noise_power > 0.0, "loss_ts_rate: noise power must be positive");

  LossResult<T> res;
  res.grad = Tensor<T>(2, N, out.height, out.width);
  const double a = power / noise_power;
  const double scale = 1.0 / (static_cast<double>(K) * N);
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      const CMat g = column_block(out, n, k);
      const double n2 = g.squaredNorm();
      if (n2 == 0.0) continue;
      const auto h = truths[n]->col(k);
      const cd z = h.dot(g.col(0));
      const double q = std::norm(z) / n2;
      total += std::log2(1.0 + a * q);
      const double dr_dq = a / ((1.0 + a * q) * std::numbers::ln2);
      const CMat grad_q = (2.0 * z / n2) * h - (2.0 * std::norm(z) / (n2 * n2)) * g.col(0);
      store_grad(res.grad, n, k, (-scale * dr_dq) * grad_q);
    }
  }
  res.value = -total * scale;
  return res;
}

template <typename T>
LossResult<T> loss_ts_recon(const Tensor<T>& out, std::span<const CMat* const> truths) {
  CSIFORGE_EXPECT(out.channels == 2, "loss_ts_recon: expects a single-user output");
  const int N = out.batch;
  const int K = out.width;
  CSIFORGE_EXPECT(static_cast<int>(truths.size()) == N, "loss_ts_recon: need N truths");

  LossResult<T> res;
  res.grad = Tensor<T>(2, N, out.height, out.width);
  double total = 0.0;
  int excluded = 0;
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      const auto h = truths[n]->col(k);
      const double hn = h.norm();
      if (hn == 0.0) {
        ++excluded;
        continue;
      }
      const CMat diff = column_block(out, n, k) - h / hn;
      total += diff.squaredNorm();
      store_grad(res.grad, n, k, (2.0 / N) * diff);
    }
  }
  if (excluded > 0)
    spdlog::debug("loss_ts_recon: {} zero-norm columns excluded", excluded);
  res.value = total / N;
  return res;
}

template precoding::PrecoderSet output_to_precoders(const Tensor<float>&, int, double);
template precoding::PrecoderSet output_to_precoders(const Tensor<double>&, int, double);
template LossResult<float> loss_e2e(const Tensor<float>&, std::span<const CMat* const>, double, double);
template LossResult<double> loss_e2e(const Tensor<double>&, std::span<const CMat* const>, double, double);
template LossResult<float> loss_ts_rate(const Tensor<float>&, std::span<const CMat* const>, double, double);
template LossResult<double> loss_ts_rate(const Tensor<double>&, std::span<const CMat* const>, double, double);
template LossResult<float> loss_ts_recon(const Tensor<float>&, std::span<const CMat* const>);
template LossResult<double> loss_ts_recon(const Tensor<double>&, std::span<const CMat* const>);

}  // namespace csiforge::nn
