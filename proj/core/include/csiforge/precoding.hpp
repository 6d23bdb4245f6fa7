/**
 * @file precoding.hpp
 * @brief Zero-forcing precoding and rate metrics.
 */
#pragma once

#include "csiforge/common.hpp"

#include <span>
#include <vector>

namespace csiforge::precoding {

struct PrecoderSet {
  std::vector<CMat> per_subcarrier;  ///< K matrices, N_t x U
  double power = 0.0;
  /// Users zeroed on each subcarrier because their channel was linearly
  /// dependent on earlier users (or zero).
  std::vector<int> dropped_users;

  int n_subcarriers() const { return static_cast<int>(per_subcarrier.size()); }
};

/// Relative Gram-Schmidt residual below which a user counts as dependent.
inline constexpr double kDependenceTolerance = 1e-6;
/// Tikhonov weight relative to the mean Gram diagonal.
inline constexpr double kRegularization = 1e-12;

/// Per-subcarrier ZF with equal per-user power and Tr(F F^H) = P.
/// `channels` holds U matrices of size N_t x K.
PrecoderSet zero_forcing(std::span<const CMat> channels, double power);

/// (1/K) sum_k sum_u log2(1 + |h_u^H f_u|^2 / (sum_{v != u} |h_u^H f_v|^2 + noise)).
double sum_rate(std::span<const CMat> true_channels, const PrecoderSet& precoders,
                double noise_power);

/// (1/K) sum_k log2(1 + |h_k^H w_k|^2 / noise), `w` used as given.
double single_user_rate(const CMat& h, const CMat& w, double noise_power);

/// Each column normalized to unit norm then scaled by sqrt(P); zero
/// columns stay zero.
CMat scale_columns_to_power(const CMat& w, double power);

double genie_zf_rate(std::span<const CMat> true_channels, double power,
                     double noise_power);

}  // namespace csiforge::precoding
