/**
 * @file layers.hpp
 * @brief Layers with explicit forward and backward passes.
 *
 * Each layer caches what its backward pass needs during forward(). A
 * backward() call consumes the most recent forward() and accumulates into
 * the parameter gradients; callers zero gradients between steps.
 * Instantiated for float and double.
 */
#pragma once

#include "csiforge/nn/tensor.hpp"

#include <Eigen/Dense>

#include <random>

namespace csiforge::nn {

inline constexpr double kLeakySlope = 0.2;

/// 3x3 convolution, padding 1, stride 1 or 2. Stride 1 runs nine shifted
/// GEMMs over a zero-bordered copy of the input; stride 2 uses im2col.
template <typename T>
class Conv2d {
 public:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int stride, std::string name);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

  /// Uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)); zero bias.
  void init_xavier(std::mt19937_64& rng);
  void init_zero();

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int stride() const { return stride_; }
  static int out_extent(int in, int stride) { return (in - 1) / stride + 1; }

  Param<T>& weight() { return weight_; }  ///< [out][in][3][3]
  Param<T>& bias() { return bias_; }
  void append_params(ParamList<T>& list) {
    list.push_back(&weight_);
    list.push_back(&bias_);
  }

 private:
  int in_ = 0, out_ = 0, stride_ = 1;
  Param<T> weight_, bias_;
  // forward cache
  Matrix cols_;  ///< stride 2: (N*Ho*Wo) x (in*9)
  Matrix xpad_;     ///< stride 1: guarded, zero-bordered input, one column per channel
  Matrix dypad_;    ///< stride 1: same layout for the output gradient
  Matrix scratch_;  ///< padded-plane output of the shifted kernel
  int n_ = 0, h_ = 0, w_ = 0, ho_ = 0, wo_ = 0;
  bool cached_ = false;

  Matrix tap_weights(int tap) const;  ///< in x out slice of one kernel tap
  Tensor<T> forward_shifted(const Tensor<T>& x);
  Tensor<T> backward_shifted(const Tensor<T>& dy);
};

/// Fully connected layer on a (features, N, 1, 1) tensor.
template <typename T>
class Dense {
 public:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

  Dense() = default;
  Dense(int in_features, int out_features, std::string name);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

  void init_xavier(std::mt19937_64& rng);
  void init_zero();

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Param<T>& weight() { return weight_; }  ///< [out][in]
  Param<T>& bias() { return bias_; }
  void append_params(ParamList<T>& list) {
    list.push_back(&weight_);
    list.push_back(&bias_);
  }

 private:
  int in_ = 0, out_ = 0;
  Param<T> weight_, bias_;
  Tensor<T> x_;
  bool cached_ = false;
};

/// Activations work in place: forward keeps its output, which stays valid
/// until the next forward call, and backward consumes its argument.
template <typename T>
class LeakyRelu {
 public:
  const Tensor<T>& forward(Tensor<T> x);
  Tensor<T> backward(Tensor<T> dy);

 private:
  Tensor<T> y_;
  bool cached_ = false;
};

template <typename T>
class Tanh {
 public:
  const Tensor<T>& forward(Tensor<T> x);
  Tensor<T> backward(Tensor<T> dy);

 private:
  Tensor<T> y_;
  bool cached_ = false;
};

/// Forward: sign(x) in {-1, +1} (sign(0) = +1). Backward: hard-tanh
/// straight-through, gradient passed where |x| <= 1 and zeroed elsewhere.
template <typename T>
class SteBinarize {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  Tensor<T> x_;
  bool cached_ = false;
};

/// (C, N, H, W) -> (C*H*W, N, 1, 1), feature index c*H*W + y*W + x.
template <typename T>
Tensor<T> flatten(const Tensor<T>& x);

/// Inverse of flatten.
template <typename T>
Tensor<T> unflatten(const Tensor<T>& x, int channels, int height, int width);

}  // namespace csiforge::nn
