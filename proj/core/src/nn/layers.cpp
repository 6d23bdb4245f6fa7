#include "csiforge/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace csiforge::nn {

Tensor<double> complex_to_tensor(std::span<const CMat> users) {
  CSIFORGE_EXPECT(!users.empty(), "complex_to_tensor: no users");
  Tensor<double> t(2 * static_cast<int>(users.size()), 1,
                   static_cast<int>(users[0].rows()), static_cast<int>(users[0].cols()));
  write_item(t, 0, users);
  return t;
}

std::vector<CMat> tensor_to_complex(const Tensor<double>& t, int item) {
  CSIFORGE_EXPECT(t.channels % 2 == 0, "tensor_to_complex: odd channel count");
  std::vector<CMat> users;
  for (int u = 0; u < t.channels / 2; ++u) users.push_back(read_item(t, item, u));
  return users;
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int stride, std::string name)
    : in_(in_channels),
      out_(out_channels),
      stride_(stride),
      weight_(name + ".weight", static_cast<std::size_t>(out_channels) * in_channels * 9),
      bias_(name + ".bias", static_cast<std::size_t>(out_channels)) {
  CSIFORGE_EXPECT(stride == 1 || stride == 2, "Conv2d: stride must be 1 or 2");
}

template <typename T>
void Conv2d<T>::init_xavier(std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / (9.0 * (in_ + out_)));
  std::uniform_real_distribution<double> dist(-a, a);
  for (auto& v : weight_.value) v = static_cast<T>(dist(rng));
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
void Conv2d<T>::init_zero() {
  std::fill(weight_.value.begin(), weight_.value.end(), T(0));
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
typename Conv2d<T>::Matrix Conv2d<T>::tap_weights(int tap) const {
  Matrix m(in_, out_);
  for (int o = 0; o < out_; ++o)
    for (int i = 0; i < in_; ++i)
      m(i, o) = weight_.value[(static_cast<std::size_t>(o) * in_ + i) * 9 + tap];
  return m;
}

namespace {

/// out[o][p] = sum_i sum_t wpack[i][t][o] * in[i][p + offs[t]] for p in
/// [0, rows). `rows` must be a multiple of the lane count and every shifted
/// read must stay inside the caller's guard band.
template <typename T>
struct Lanes;
template <>
struct Lanes<float> {
  typedef float type __attribute__((vector_size(64)));
};
template <>
struct Lanes<double> {
  typedef double type __attribute__((vector_size(64)));
};

template <typename T, int OB>
void shifted_conv_block(const T* in, Eigen::Index in_stride, int cin, const T* wpack, int cout,
                        const Eigen::Index* offs, T* out, Eigen::Index out_stride,
                        Eigen::Index rows) {
  constexpr int L = 64 / sizeof(T);
  using V = typename Lanes<T>::type;
  for (Eigen::Index p0 = 0; p0 < rows; p0 += L) {
    for (int o0 = 0; o0 < cout; o0 += OB) {
      V acc[OB];
      for (int ob = 0; ob < OB; ++ob) acc[ob] = V{};
      for (int i = 0; i < cin; ++i) {
        const T* xc = in + i * in_stride + p0;
        const T* wi = wpack + static_cast<std::size_t>(i) * 9 * cout + o0;
        for (int t = 0; t < 9; ++t) {
          V xv;
          std::memcpy(&xv, xc + offs[t], sizeof(V));
          const T* wt = wi + t * cout;
#pragma GCC unroll 8
          for (int ob = 0; ob < OB; ++ob) acc[ob] += wt[ob] * xv;
        }
      }
      for (int ob = 0; ob < OB; ++ob)
        std::memcpy(out + (o0 + ob) * out_stride + p0, &acc[ob], sizeof(V));
    }
  }
}

template <typename T>
void shifted_conv(const T* in, Eigen::Index in_stride, int cin, const T* wpack, int cout,
                  const Eigen::Index* offs, T* out, Eigen::Index out_stride, Eigen::Index rows) {
  if (cout % 8 == 0)
    shifted_conv_block<T, 8>(in, in_stride, cin, wpack, cout, offs, out, out_stride, rows);
  else if (cout % 4 == 0)
    shifted_conv_block<T, 4>(in, in_stride, cin, wpack, cout, offs, out, out_stride, rows);
  else if (cout % 2 == 0)
    shifted_conv_block<T, 2>(in, in_stride, cin, wpack, cout, offs, out, out_stride, rows);
  else
    shifted_conv_block<T, 1>(in, in_stride, cin, wpack, cout, offs, out, out_stride, rows);
}

/// gpack[i][t][o] += sum_p in[i][p + offs[t]] * dy[o][p] over p in [0, rows).
template <typename T, int OB>
void shifted_wgrad_block(const T* in, Eigen::Index in_stride, int cin, const T* dy,
                         Eigen::Index dy_stride, int cout, const Eigen::Index* offs,
                         Eigen::Index rows, T* gpack) {
  constexpr int L = 64 / sizeof(T);
  using V = typename Lanes<T>::type;
  for (int i = 0; i < cin; ++i) {
    const T* xc = in + i * in_stride;
    for (int o0 = 0; o0 < cout; o0 += OB) {
      V acc[9][OB];
      for (int t = 0; t < 9; ++t)
        for (int ob = 0; ob < OB; ++ob) acc[t][ob] = V{};
      for (Eigen::Index p0 = 0; p0 < rows; p0 += L) {
        V d[OB];
        for (int ob = 0; ob < OB; ++ob)
          std::memcpy(&d[ob], dy + (o0 + ob) * dy_stride + p0, sizeof(V));
#pragma GCC unroll 9
        for (int t = 0; t < 9; ++t) {
          V xv;
          std::memcpy(&xv, xc + p0 + offs[t], sizeof(V));
          for (int ob = 0; ob < OB; ++ob) acc[t][ob] += xv * d[ob];
        }
      }
      for (int t = 0; t < 9; ++t)
        for (int ob = 0; ob < OB; ++ob) {
          T sum = T(0);
          for (int l = 0; l < L; ++l) sum += acc[t][ob][l];
          gpack[(static_cast<std::size_t>(i) * 9 + t) * cout + o0 + ob] += sum;
        }
    }
  }
}

template <typename T>
void shifted_wgrad(const T* in, Eigen::Index in_stride, int cin, const T* dy,
                   Eigen::Index dy_stride, int cout, const Eigen::Index* offs, Eigen::Index rows,
                   T* gpack) {
  if (cout % 2 == 0)
    shifted_wgrad_block<T, 2>(in, in_stride, cin, dy, dy_stride, cout, offs, rows, gpack);
  else
    shifted_wgrad_block<T, 1>(in, in_stride, cin, dy, dy_stride, cout, offs, rows, gpack);
}

/// Padded plane geometry: each item occupies (h+2) x (w+2) rows; the row
/// count is rounded up to whole vector lanes and a guard band on both ends
/// keeps every shifted read in range.
struct PadGeometry {
  Eigen::Index pw, ph, mp, rows, guard, total;
  Eigen::Index offs[9];

  template <typename T>
  static PadGeometry make(int n, int h, int w) {
    constexpr int L = 64 / sizeof(T);
    PadGeometry g{};
    g.pw = w + 2;
    g.ph = h + 2;
    g.mp = static_cast<Eigen::Index>(n) * g.ph * g.pw;
    g.rows = (g.mp + L - 1) / L * L;
    g.guard = g.pw + 1;
    g.total = g.guard + g.rows + g.guard + L;
    for (int t = 0; t < 9; ++t) g.offs[t] = (t / 3 - 1) * g.pw + (t % 3 - 1);
    return g;
  }
  Eigen::Index interior(int n, int y) const { return (n * ph + y + 1) * pw + 1; }
};

}  // namespace

template <typename T>
Tensor<T> Conv2d<T>::forward_shifted(const Tensor<T>& x) {
  const auto g = PadGeometry::make<T>(n_, h_, w_);
  // Borders are never written, so a same-shaped buffer stays valid.
  if (xpad_.rows() != g.total || xpad_.cols() != in_) xpad_.setZero(g.total, in_);
  for (int c = 0; c < in_; ++c)
    for (int n = 0; n < n_; ++n)
      for (int y = 0; y < h_; ++y) {
        const T* src = x.data.data() + x.index(c, n, y, 0);
        std::copy(src, src + w_, xpad_.col(c).data() + g.guard + g.interior(n, y));
      }

  // wpack[i][t][o] = w[o][i][t]
  std::vector<T> wpack(weight_.value.size());
  for (int o = 0; o < out_; ++o)
    for (int i = 0; i < in_; ++i)
      for (int t = 0; t < 9; ++t)
        wpack[(static_cast<std::size_t>(i) * 9 + t) * out_ + o] =
            weight_.value[(static_cast<std::size_t>(o) * in_ + i) * 9 + t];
  Matrix& yp = scratch_;
  yp.resize(g.rows, out_);
  shifted_conv(xpad_.data() + g.guard, xpad_.rows(), in_, wpack.data(), out_, g.offs, yp.data(),
               yp.rows(), g.rows);

  Tensor<T> y(out_, n_, h_, w_);
  for (int o = 0; o < out_; ++o) {
    const T b = bias_.value[o];
    for (int n = 0; n < n_; ++n)
      for (int r = 0; r < h_; ++r) {
        const T* src = yp.col(o).data() + g.interior(n, r);
        T* dst = y.data.data() + y.index(o, n, r, 0);
        for (int c = 0; c < w_; ++c) dst[c] = src[c] + b;
      }
  }
  cached_ = true;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward_shifted(const Tensor<T>& dy) {
  const auto g = PadGeometry::make<T>(n_, h_, w_);
  Matrix& dyp = dypad_;
  if (dyp.rows() != g.total || dyp.cols() != out_) dyp.setZero(g.total, out_);
  for (int o = 0; o < out_; ++o) {
    T bsum = T(0);
    for (int n = 0; n < n_; ++n)
      for (int r = 0; r < h_; ++r) {
        const T* src = dy.data.data() + dy.index(o, n, r, 0);
        T* dst = dyp.col(o).data() + g.guard + g.interior(n, r);
        for (int c = 0; c < w_; ++c) {
          dst[c] = src[c];
          bsum += src[c];
        }
      }
    bias_.grad[o] += bsum;
  }

  // Weight gradient. Narrow layers use the register-blocked reduction,
  // wide ones one GEMM per tap.
  if (in_ * out_ <= 64) {
    std::vector<T> gpack(weight_.value.size(), T(0));
    shifted_wgrad(xpad_.data() + g.guard, xpad_.rows(), in_, dyp.data() + g.guard, dyp.rows(),
                  out_, g.offs, g.rows, gpack.data());
    for (int o = 0; o < out_; ++o)
      for (int i = 0; i < in_; ++i)
        for (int t = 0; t < 9; ++t)
          weight_.grad[(static_cast<std::size_t>(o) * in_ + i) * 9 + t] +=
              gpack[(static_cast<std::size_t>(i) * 9 + t) * out_ + o];
  } else {
    Matrix gtap(in_, out_);
    for (int t = 0; t < 9; ++t) {
      gtap.noalias() = xpad_.middleRows(g.guard + g.offs[t], g.rows).transpose() *
                       dyp.middleRows(g.guard, g.rows);
      for (int o = 0; o < out_; ++o)
        for (int i = 0; i < in_; ++i)
          weight_.grad[(static_cast<std::size_t>(o) * in_ + i) * 9 + t] += gtap(i, o);
    }
  }

  // Input gradient: the same shifted kernel with flipped taps,
  // wpack[o][t][i] = w[o][i][8 - t].
  std::vector<T> wpack(weight_.value.size());
  for (int o = 0; o < out_; ++o)
    for (int i = 0; i < in_; ++i)
      for (int t = 0; t < 9; ++t)
        wpack[(static_cast<std::size_t>(o) * 9 + t) * in_ + i] =
            weight_.value[(static_cast<std::size_t>(o) * in_ + i) * 9 + (8 - t)];
  Matrix& dxp = scratch_;
  dxp.resize(g.rows, in_);
  shifted_conv(dyp.data() + g.guard, dyp.rows(), out_, wpack.data(), in_, g.offs, dxp.data(),
               dxp.rows(), g.rows);

  Tensor<T> dx(in_, n_, h_, w_);
  for (int c = 0; c < in_; ++c)
    for (int n = 0; n < n_; ++n)
      for (int r = 0; r < h_; ++r) {
        const T* src = dxp.col(c).data() + g.interior(n, r);
        std::copy(src, src + w_, dx.data.data() + dx.index(c, n, r, 0));
      }
  return dx;
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  CSIFORGE_EXPECT(x.channels == in_, "Conv2d::forward: channel mismatch");
  n_ = x.batch;
  h_ = x.height;
  w_ = x.width;
  ho_ = out_extent(h_, stride_);
  wo_ = out_extent(w_, stride_);
  if (stride_ == 1) return forward_shifted(x);
  const Eigen::Index M = static_cast<Eigen::Index>(n_) * ho_ * wo_;
  const int k9 = in_ * 9;
  cols_.resize(M, k9);

  for (int ci = 0; ci < in_; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = cols_.data() + static_cast<Eigen::Index>(ci * 9 + ky * 3 + kx) * M;
        for (int n = 0; n < n_; ++n)
          for (int oy = 0; oy < ho_; ++oy) {
            T* row = dst + (static_cast<Eigen::Index>(n) * ho_ + oy) * wo_;
            const int iy = oy * stride_ + ky - 1;
            if (iy < 0 || iy >= h_) {
              std::fill(row, row + wo_, T(0));
              continue;
            }
            const T* src = x.data.data() + x.index(ci, n, iy, 0);
            for (int ox = 0; ox < wo_; ++ox) {
              const int ix = ox * stride_ + kx - 1;
              row[ox] = (ix >= 0 && ix < w_) ? src[ix] : T(0);
            }
          }
      }

  Tensor<T> y(out_, n_, ho_, wo_);
  Eigen::Map<Matrix> ym(y.data.data(), M, out_);
  Eigen::Map<const Matrix> wm(weight_.value.data(), k9, out_);
  ym.noalias() = cols_ * wm;
  for (int o = 0; o < out_; ++o) ym.col(o).array() += bias_.value[o];
  cached_ = true;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
  CSIFORGE_EXPECT(cached_, "Conv2d::backward called without forward");
  CSIFORGE_EXPECT(dy.channels == out_ && dy.batch == n_ && dy.height == ho_ &&
                      dy.width == wo_,
                  "Conv2d::backward: gradient shape mismatch");
  if (stride_ == 1) return backward_shifted(dy);
  const Eigen::Index M = static_cast<Eigen::Index>(n_) * ho_ * wo_;
  const int k9 = in_ * 9;
  Eigen::Map<const Matrix> dym(dy.data.data(), M, out_);
  Eigen::Map<Matrix> gw(weight_.grad.data(), k9, out_);
  Eigen::Map<const Matrix> wm(weight_.value.data(), k9, out_);
  gw.noalias() += cols_.transpose() * dym;
  for (int o = 0; o < out_; ++o) bias_.grad[o] += dym.col(o).sum();

  const Matrix dcols = dym * wm.transpose();
  Tensor<T> dx(in_, n_, h_, w_);
  for (int ci = 0; ci < in_; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = dcols.data() + static_cast<Eigen::Index>(ci * 9 + ky * 3 + kx) * M;
        for (int n = 0; n < n_; ++n)
          for (int oy = 0; oy < ho_; ++oy) {
            const int iy = oy * stride_ + ky - 1;
            if (iy < 0 || iy >= h_) continue;
            const T* row = src + (static_cast<Eigen::Index>(n) * ho_ + oy) * wo_;
            T* dst = dx.data.data() + dx.index(ci, n, iy, 0);
            for (int ox = 0; ox < wo_; ++ox) {
              const int ix = ox * stride_ + kx - 1;
              if (ix >= 0 && ix < w_) dst[ix] += row[ox];
            }
          }
      }
  return dx;
}

// ----------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(int in_features, int out_features, std::string name)
    : in_(in_features),
      out_(out_features),
      weight_(name + ".weight", static_cast<std::size_t>(in_features) * out_features),
      bias_(name + ".bias", static_cast<std::size_t>(out_features)) {}

template <typename T>
void Dense<T>::init_xavier(std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / (in_ + out_));
  std::uniform_real_distribution<double> dist(-a, a);
  for (auto& v : weight_.value) v = static_cast<T>(dist(rng));
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
void Dense<T>::init_zero() {
  std::fill(weight_.value.begin(), weight_.value.end(), T(0));
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x) {
  CSIFORGE_EXPECT(x.channels == in_ && x.height == 1 && x.width == 1,
                  "Dense::forward: expected (in, N, 1, 1)");
  x_ = x;
  Tensor<T> y(out_, x.batch, 1, 1);
  Eigen::Map<const Matrix> xm(x.data.data(), x.batch, in_);
  Eigen::Map<const Matrix> wm(weight_.value.data(), in_, out_);
  Eigen::Map<Matrix> ym(y.data.data(), x.batch, out_);
  ym.noalias() = xm * wm;
  for (int o = 0; o < out_; ++o) ym.col(o).array() += bias_.value[o];
  cached_ = true;
  return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& dy) {
  CSIFORGE_EXPECT(cached_, "Dense::backward called without forward");
  CSIFORGE_EXPECT(dy.channels == out_ && dy.batch == x_.batch,
                  "Dense::backward: gradient shape mismatch");
  const int n = x_.batch;
  Eigen::Map<const Matrix> xm(x_.data.data(), n, in_);
  Eigen::Map<const Matrix> dym(dy.data.data(), n, out_);
  Eigen::Map<const Matrix> wm(weight_.value.data(), in_, out_);
  Eigen::Map<Matrix> gw(weight_.grad.data(), in_, out_);
  gw.noalias() += xm.transpose() * dym;
  for (int o = 0; o < out_; ++o) bias_.grad[o] += dym.col(o).sum();
  Tensor<T> dx(in_, n, 1, 1);
  Eigen::Map<Matrix> dxm(dx.data.data(), n, in_);
  dxm.noalias() = dym * wm.transpose();
  return dx;
}

// ----------------------------------------------------------- activations

namespace {

template <typename T>
Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> as_array(Tensor<T>& t) {
  return {t.data.data(), static_cast<Eigen::Index>(t.data.size())};
}

template <typename T>
Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> as_array(const Tensor<T>& t) {
  return {t.data.data(), static_cast<Eigen::Index>(t.data.size())};
}

}  // namespace

template <typename T>
const Tensor<T>& LeakyRelu<T>::forward(Tensor<T> x) {
  y_ = std::move(x);
  // max(x, s*x) for 0 < s < 1; branch-free so it vectorizes.
  auto v = as_array(y_);
  v = v.max(static_cast<T>(kLeakySlope) * v);
  cached_ = true;
  return y_;
}

// The slope is positive, so y > 0 exactly where x > 0.
template <typename T>
Tensor<T> LeakyRelu<T>::backward(Tensor<T> dy) {
  CSIFORGE_EXPECT(cached_ && dy.same_shape(y_), "LeakyRelu::backward: no matching forward");
  const auto y = as_array(y_);
  auto d = as_array(dy);
  using A = Eigen::Array<T, Eigen::Dynamic, 1>;
  d *= (y > T(0)).select(A::Ones(d.size()), A::Constant(d.size(), static_cast<T>(kLeakySlope)));
  return dy;
}

template <typename T>
const Tensor<T>& Tanh<T>::forward(Tensor<T> x) {
  y_ = std::move(x);
  auto v = as_array(y_);
  v = v.tanh();
  cached_ = true;
  return y_;
}

template <typename T>
Tensor<T> Tanh<T>::backward(Tensor<T> dy) {
  CSIFORGE_EXPECT(cached_ && dy.same_shape(y_), "Tanh::backward: no matching forward");
  T* d = dy.data.data();
  const T* y = y_.data.data();
  const std::size_t n = dy.data.size();
  for (std::size_t i = 0; i < n; ++i) d[i] *= T(1) - y[i] * y[i];
  return dy;
}

template <typename T>
Tensor<T> SteBinarize<T>::forward(const Tensor<T>& x) {
  x_ = x;
  Tensor<T> y = x;
  for (auto& v : y.data) v = v >= T(0) ? T(1) : T(-1);
  cached_ = true;
  return y;
}

template <typename T>
Tensor<T> SteBinarize<T>::backward(const Tensor<T>& dy) {
  CSIFORGE_EXPECT(cached_ && dy.same_shape(x_), "SteBinarize::backward: no matching forward");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i)
    if (std::abs(x_.data[i]) > T(1)) dx.data[i] = T(0);
  return dx;
}

// --------------------------------------------------------------- reshape

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  const int hw = x.height * x.width;
  Tensor<T> out(x.channels * hw, x.batch, 1, 1);
  for (int c = 0; c < x.channels; ++c)
    for (int n = 0; n < x.batch; ++n) {
      const T* src = x.data.data() + x.index(c, n, 0, 0);
      for (int p = 0; p < hw; ++p)
        out.data[static_cast<std::size_t>(c * hw + p) * x.batch + n] = src[p];
    }
  return out;
}

template <typename T>
Tensor<T> unflatten(const Tensor<T>& x, int channels, int height, int width) {
  const int hw = height * width;
  CSIFORGE_EXPECT(x.channels == channels * hw && x.height == 1 && x.width == 1,
                  "unflatten: feature count mismatch");
  Tensor<T> out(channels, x.batch, height, width);
  for (int c = 0; c < channels; ++c)
    for (int n = 0; n < x.batch; ++n) {
      T* dst = out.data.data() + out.index(c, n, 0, 0);
      for (int p = 0; p < hw; ++p)
        dst[p] = x.data[static_cast<std::size_t>(c * hw + p) * x.batch + n];
    }
  return out;
}

template class Conv2d<float>;
template class Conv2d<double>;
template class Dense<float>;
template class Dense<double>;
template class LeakyRelu<float>;
template class LeakyRelu<double>;
template class Tanh<float>;
template class Tanh<double>;
template class SteBinarize<float>;
template class SteBinarize<double>;
template Tensor<float> flatten(const Tensor<float>&);
template Tensor<double> flatten(const Tensor<double>&);
template Tensor<float> unflatten(const Tensor<float>&, int, int, int);
template Tensor<double> unflatten(const Tensor<double>&, int, int, int);

}  // namespace csiforge::nn
