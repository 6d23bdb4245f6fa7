/**
 * @file losses.hpp
 * @brief Training objectives on refiner outputs, with analytic gradients.
 *
 * Values are computed in double regardless of the tensor scalar type.
 * `truths` holds pointers to ground-truth N_t x K channels; for the
 * multi-user loss they are item-major (item n, user u at n*U + u).
 */
#pragma once

#include "csiforge/nn/tensor.hpp"
#include "csiforge/precoding.hpp"

#include <span>

namespace csiforge::nn {

template <typename T>
struct LossResult {
  double value = 0.0;
  Tensor<T> grad;  ///< d(value)/d(output), same shape as the output
};

/// Precoders of batch item `item`: F_k column u from channels (2u, 2u+1),
/// scaled by sqrt(P / Tr(F_k F_k^H)). A zero F_k stays zero.
template <typename T>
precoding::PrecoderSet output_to_precoders(const Tensor<T>& out, int item, double power);

/// Negative sum rate, averaged over the batch.
template <typename T>
LossResult<T> loss_e2e(const Tensor<T>& out, std::span<const CMat* const> truths,
                       double power, double noise_power);

/// Negative single-user rate of the sqrt(P)-scaled unit-norm columns,
/// averaged over the batch. `out` has 2 channels.
template <typename T>
LossResult<T> loss_ts_rate(const Tensor<T>& out, std::span<const CMat* const> truths,
                           double power, double noise_power);

/// ||W* - W||_F^2 with w*_k = h_k / ||h_k||, averaged over the batch.
/// Columns with ||h_k|| = 0 are excluded.
template <typename T>
LossResult<T> loss_ts_recon(const Tensor<T>& out, std::span<const CMat* const> truths);

}  // namespace csiforge::nn
