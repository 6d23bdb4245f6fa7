/**
 * @file models.hpp
 * @brief Refiner network (the generative decoder) and the learned
 * encoder-decoder benchmark.
 */
#pragma once

#include "csiforge/nn/layers.hpp"

#include <cstdint>
#include <vector>

namespace csiforge::nn {

enum class InitMode : std::uint8_t {
  kXavier = 0,        ///< every conv Xavier-uniform
  kZero = 1,          ///< every parameter zero (exact identity map)
  kResidualZero = 2,  ///< Xavier, but the last conv of each block zero
};

struct RefinerArch {
  int n_users = 1;
  int n_blocks = 5;
  int hidden1 = 16;
  int hidden2 = 32;

  int channels() const { return 2 * n_users; }
  bool operator==(const RefinerArch&) const = default;
};

/// x + tanh(conv3(lrelu(conv2(lrelu(conv1(x)))))).
template <typename T>
class RefinerBlock {
 public:
  RefinerBlock() = default;
  RefinerBlock(const RefinerArch& arch, int index);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  void init(InitMode mode, std::mt19937_64& rng);
  void append_params(ParamList<T>& list);

 private:
  Conv2d<T> conv1_, conv2_, conv3_;
  LeakyRelu<T> act1_, act2_;
  Tanh<T> out_act_;
};

template <typename T>
class RefinerNet {
 public:
  RefinerNet() = default;
  explicit RefinerNet(const RefinerArch& arch);

  /// x: (2U, N, N_t, K). Output has the same shape.
  Tensor<T> forward(const Tensor<T>& x);
  /// Accumulates parameter gradients; returns d(loss)/dx.
  Tensor<T> backward(const Tensor<T>& dy);

  void init(InitMode mode, std::uint64_t seed);
  ParamList<T> params();
  const RefinerArch& arch() const { return arch_; }

  template <typename U>
  RefinerNet<U> cast() const {
    RefinerNet<U> out(arch_);
    auto& self = const_cast<RefinerNet&>(*this);
    copy_param_values(self.params(), out.params());
    return out;
  }

 private:
  RefinerArch arch_;
  std::vector<RefinerBlock<T>> blocks_;
  bool forwarded_ = false;
};

/// Parameter count of a refiner, a pure function of the architecture.
std::size_t refiner_param_count(const RefinerArch& arch);

struct EncDecArch {
  int n_tx = 16;
  int n_subcarriers = 48;
  int feedback_bits = 64;
  std::vector<int> encoder_widths{8, 8, 16, 16, 32, 32};
  RefinerArch refiner{};  ///< n_users is forced to 1

  bool operator==(const EncDecArch&) const = default;
};

/// Per-user learned benchmark: conv encoder -> dense -> sign bits, then
/// dense -> reshape -> refiner. Blocks 2, 4 and 6 use stride 2.
template <typename T>
class EncDecNet {
 public:
  EncDecNet() = default;
  explicit EncDecNet(const EncDecArch& arch);

  /// x: (2, N, N_t, K) estimated channel of one user per item.
  Tensor<T> forward(const Tensor<T>& x);
  void backward(const Tensor<T>& dy);
  /// Bits (+1/-1) produced by the last forward, (B, N, 1, 1).
  const Tensor<T>& last_bits() const { return bits_; }

  void init(InitMode refiner_mode, std::uint64_t seed);
  ParamList<T> params();
  const EncDecArch& arch() const { return arch_; }

  template <typename U>
  EncDecNet<U> cast() const {
    EncDecNet<U> out(arch_);
    auto& self = const_cast<EncDecNet&>(*this);
    copy_param_values(self.params(), out.params());
    return out;
  }

 private:
  EncDecArch arch_;
  std::vector<Conv2d<T>> convs_;
  std::vector<LeakyRelu<T>> acts_;
  Dense<T> to_bits_;
  SteBinarize<T> ste_;
  Dense<T> from_bits_;
  RefinerNet<T> refiner_;
  Tensor<T> bits_;
  int enc_c_ = 0, enc_h_ = 0, enc_w_ = 0;
};

}  // namespace csiforge::nn
