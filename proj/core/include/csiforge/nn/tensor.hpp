/**
 * @file tensor.hpp
 * @brief Dense 4-D activation tensor and trainable parameter buffers.
 *
 * Activations are stored channel-major across the batch (C, N, H, W): the
 * N*H*W values of one channel are contiguous. A 3x3 convolution over a
 * batch is then one GEMM whose result is already in this layout.
 */
#pragma once

#include "csiforge/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace csiforge::nn {

template <typename T>
struct Tensor {
  int channels = 0;
  int batch = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c, int n, int h, int w)
      : channels(c), batch(n), height(h), width(w),
        data(static_cast<std::size_t>(c) * n * h * w, T(0)) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return data.size(); }

  std::size_t index(int c, int n, int y, int x) const {
    return ((static_cast<std::size_t>(c) * batch + n) * height + y) * width + x;
  }
  T& at(int c, int n, int y, int x) { return data[index(c, n, y, x)]; }
  const T& at(int c, int n, int y, int x) const { return data[index(c, n, y, x)]; }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && batch == o.batch && height == o.height &&
           width == o.width;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(channels, batch, height, width);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

/// A trainable buffer with its gradient accumulator.
template <typename T>
struct Param {
  std::string name;
  std::vector<T> value;
  std::vector<T> grad;

  Param() = default;
  Param(std::string n, std::size_t size)
      : name(std::move(n)), value(size, T(0)), grad(size, T(0)) {}
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

template <typename T>
std::size_t count_params(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->size();
  return n;
}

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (auto* p : params) p->zero_grad();
}

/// Copies parameter values between two models of identical architecture.
template <typename From, typename To>
void copy_param_values(const ParamList<From>& from, const ParamList<To>& to) {
  CSIFORGE_EXPECT(from.size() == to.size(), "copy_param_values: layer count mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    CSIFORGE_EXPECT(from[i]->size() == to[i]->size(), "copy_param_values: size mismatch");
    for (std::size_t j = 0; j < from[i]->size(); ++j)
      to[i]->value[j] = static_cast<To>(from[i]->value[j]);
  }
}

/// (2U, 1, N_t, K): channel 2u is Re(H_u), channel 2u+1 is Im(H_u).
Tensor<double> complex_to_tensor(std::span<const CMat> users);

/// Inverse of complex_to_tensor for batch item `item`.
std::vector<CMat> tensor_to_complex(const Tensor<double>& t, int item = 0);

/// Writes user matrices into batch slot `item` of a (2U, N, N_t, K) tensor.
template <typename T>
void write_item(Tensor<T>& t, int item, std::span<const CMat> users) {
  CSIFORGE_EXPECT(t.channels == 2 * static_cast<int>(users.size()),
                  "write_item: channel count must be 2U");
  for (std::size_t u = 0; u < users.size(); ++u) {
    const CMat& h = users[u];
    CSIFORGE_EXPECT(h.rows() == t.height && h.cols() == t.width, "write_item: shape mismatch");
    for (int y = 0; y < t.height; ++y)
      for (int x = 0; x < t.width; ++x) {
        t.at(2 * static_cast<int>(u), item, y, x) = static_cast<T>(h(y, x).real());
        t.at(2 * static_cast<int>(u) + 1, item, y, x) = static_cast<T>(h(y, x).imag());
      }
  }
}

/// User `user` of batch slot `item` as an N_t x K complex matrix.
template <typename T>
CMat read_item(const Tensor<T>& t, int item, int user) {
  CMat h(t.height, t.width);
  for (int y = 0; y < t.height; ++y)
    for (int x = 0; x < t.width; ++x)
      h(y, x) = cd(static_cast<double>(t.at(2 * user, item, y, x)),
                   static_cast<double>(t.at(2 * user + 1, item, y, x)));
  return h;
}

}  // namespace csiforge::nn
