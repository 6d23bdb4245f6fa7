/**
 * @file test_nn.cpp
 * @brief Layers, networks and the optimizer: forward values against direct
 * oracles and every backward pass against central differences.
 */
#include "csiforge/nn/adam.hpp"
#include "csiforge/nn/layers.hpp"
#include "csiforge/nn/losses.hpp"
#include "csiforge/nn/models.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace csiforge;
using namespace csiforge::nn;
using gradcheck::random_tensor;

namespace {

template <typename T>
void randomize(Param<T>& p, std::mt19937_64& rng, double scale = 0.3) {
  std::normal_distribution<double> d(0.0, scale);
  for (auto& v : p.value) v = static_cast<T>(d(rng));
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

struct ConvCase {
  int in, out, stride, h, w, n;
};

const ConvCase kConvCases[] = {
    {2, 16, 1, 16, 48, 2}, {16, 32, 1, 16, 48, 1}, {32, 2, 1, 16, 48, 1}, {4, 16, 1, 8, 12, 3},
    {3, 5, 1, 5, 7, 2},    {1, 1, 1, 1, 1, 1},     {2, 8, 2, 16, 48, 2},  {8, 16, 2, 9, 13, 2},
    {32, 4, 1, 4, 6, 2},   {16, 16, 1, 3, 17, 1},
};

}  // namespace

class ConvOracle : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvOracle, DoubleForwardMatchesDirectSum) {
  const auto c = GetParam();
  std::mt19937_64 rng(c.in * 100 + c.out);
  Conv2d<double> conv(c.in, c.out, c.stride, "conv");
  randomize(conv.weight(), rng);
  randomize(conv.bias(), rng);
  const auto x = random_tensor(c.in, c.n, c.h, c.w, rng);
  const auto y = conv.forward(x);
  const auto ref = oracle::conv2d(x, conv.weight().value, conv.bias().value, c.out, c.stride);
  ASSERT_TRUE(y.same_shape(ref));
  EXPECT_LT(max_abs_diff(y, ref), 1e-12);
}

TEST_P(ConvOracle, FloatForwardMatchesDirectSum) {
  const auto c = GetParam();
  std::mt19937_64 rng(c.in * 100 + c.out + 1);
  Conv2d<float> conv(c.in, c.out, c.stride, "conv");
  randomize(conv.weight(), rng);
  randomize(conv.bias(), rng);
  const auto x = random_tensor(c.in, c.n, c.h, c.w, rng).cast<float>();
  const auto y = conv.forward(x);
  const auto ref = oracle::conv2d(x, conv.weight().value, conv.bias().value, c.out, c.stride);
  EXPECT_LT(max_abs_diff(y.cast<double>(), ref.cast<double>()), 1e-4);
}

TEST_P(ConvOracle, FloatBackwardAgreesWithDouble) {
  const auto c = GetParam();
  std::mt19937_64 rng(c.in * 100 + c.out + 2);
  Conv2d<double> cd64(c.in, c.out, c.stride, "conv");
  randomize(cd64.weight(), rng);
  randomize(cd64.bias(), rng);
  Conv2d<float> cd32(c.in, c.out, c.stride, "conv");
  copy_param_values(ParamList<double>{&cd64.weight(), &cd64.bias()},
                    ParamList<float>{&cd32.weight(), &cd32.bias()});
  const auto x = random_tensor(c.in, c.n, c.h, c.w, rng);
  const auto y = cd64.forward(x);
  cd32.forward(x.cast<float>());
  const auto dy = random_tensor(y.channels, y.batch, y.height, y.width, rng);
  const auto dx64 = cd64.backward(dy);
  const auto dx32 = cd32.backward(dy.cast<float>()).cast<double>();
  EXPECT_LT(max_abs_diff(dx64, dx32), 1e-4);
  // Weight gradients sum N*Ho*Wo products, so float rounding grows with the plane.
  const auto tol = [&](double g) { return 1e-7 * c.n * y.height * y.width + 1e-6 * std::abs(g); };
  for (std::size_t i = 0; i < cd64.weight().size(); ++i)
    ASSERT_NEAR(cd64.weight().grad[i], cd32.weight().grad[i], tol(cd64.weight().grad[i]));
  for (std::size_t i = 0; i < cd64.bias().size(); ++i)
    ASSERT_NEAR(cd64.bias().grad[i], cd32.bias().grad[i], tol(cd64.bias().grad[i]));
}

TEST_P(ConvOracle, BackwardMatchesCentralDifferences) {
  const auto c = GetParam();
  std::mt19937_64 rng(c.in * 100 + c.out + 3);
  Conv2d<double> conv(c.in, c.out, c.stride, "conv");
  conv.init_xavier(rng);
  randomize(conv.bias(), rng);
  const auto st = gradcheck::check_module(conv, {&conv.weight(), &conv.bias()},
                                          random_tensor(c.in, c.n, c.h, c.w, rng), 20, 20, rng,
                                          "conv");
  EXPECT_TRUE(st.ok()) << st.worst;
}

INSTANTIATE_TEST_SUITE_P(Shapes, ConvOracle, ::testing::ValuesIn(kConvCases));

TEST(Conv, RepeatedForwardIsStable) {
  std::mt19937_64 rng(4);
  Conv2d<float> conv(16, 32, 1, "conv");
  conv.init_xavier(rng);
  const auto a = random_tensor(16, 2, 16, 48, rng).cast<float>();
  const auto b = random_tensor(16, 3, 8, 10, rng).cast<float>();
  const auto ya = conv.forward(a);
  conv.forward(b);
  EXPECT_EQ(conv.forward(a).data, ya.data);
}

TEST(Conv, BackwardAccumulatesGradients) {
  std::mt19937_64 rng(5);
  Conv2d<double> conv(3, 4, 1, "conv");
  conv.init_xavier(rng);
  const auto x = random_tensor(3, 1, 4, 5, rng);
  const auto dy = random_tensor(4, 1, 4, 5, rng);
  conv.forward(x);
  conv.backward(dy);
  const auto once = conv.weight().grad;
  conv.forward(x);
  conv.backward(dy);
  for (std::size_t i = 0; i < once.size(); ++i)
    EXPECT_NEAR(conv.weight().grad[i], 2 * once[i], 1e-12 * std::max(1.0, std::abs(once[i])));
}

TEST(Conv, BackwardBeforeForwardIsContractViolation) {
  Conv2d<double> conv(2, 2, 1, "conv");
  EXPECT_THROW(conv.backward(Tensor<double>(2, 1, 3, 3)), ContractViolation);
}

TEST(Dense, ForwardMatchesMatrixProduct) {
  std::mt19937_64 rng(6);
  Dense<double> d(5, 3, "fc");
  d.init_xavier(rng);
  randomize(d.bias(), rng);
  const auto x = random_tensor(5, 4, 1, 1, rng);
  const auto y = d.forward(x);
  for (int n = 0; n < 4; ++n)
    for (int o = 0; o < 3; ++o) {
      double ref = d.bias().value[o];
      for (int i = 0; i < 5; ++i) ref += d.weight().value[o * 5 + i] * x.at(i, n, 0, 0);
      EXPECT_NEAR(y.at(o, n, 0, 0), ref, 1e-13);
    }
}

TEST(Dense, BackwardMatchesCentralDifferences) {
  std::mt19937_64 rng(7);
  Dense<double> d(40, 12, "fc");
  d.init_xavier(rng);
  randomize(d.bias(), rng);
  const auto st = gradcheck::check_module(d, {&d.weight(), &d.bias()},
                                          random_tensor(40, 3, 1, 1, rng), 40, 20, rng, "dense");
  EXPECT_TRUE(st.ok()) << st.worst;
}

TEST(Activations, LeakyReluValuesAndGradient) {
  Tensor<double> x(1, 1, 1, 4);
  x.data = {-2.0, -0.5, 0.5, 3.0};
  LeakyRelu<double> a;
  const auto y = a.forward(x);
  EXPECT_EQ(y.data, (std::vector<double>{-2.0 * kLeakySlope, -0.5 * kLeakySlope, 0.5, 3.0}));
  Tensor<double> dy(1, 1, 1, 4);
  dy.data = {1.0, 2.0, 3.0, 4.0};
  EXPECT_EQ(a.backward(dy).data, (std::vector<double>{kLeakySlope, 2 * kLeakySlope, 3.0, 4.0}));
  std::mt19937_64 rng(8);
  LeakyRelu<double> b;
  const auto st = gradcheck::check_module(b, {}, random_tensor(3, 2, 4, 5, rng), 0, 40, rng, "lrelu");
  EXPECT_TRUE(st.ok()) << st.worst;
}

TEST(Activations, TanhIsBoundedAndDifferentiable) {
  std::mt19937_64 rng(9);
  Tanh<double> t;
  const auto y = t.forward(random_tensor(2, 2, 3, 3, rng, 50.0));
  for (double v : y.data) EXPECT_LE(std::abs(v), 1.0);
  Tanh<double> u;
  const auto st = gradcheck::check_module(u, {}, random_tensor(3, 2, 4, 5, rng), 0, 40, rng, "tanh");
  EXPECT_TRUE(st.ok()) << st.worst;
}

TEST(Ste, ForwardIsSignWithPositiveZero) {
  Tensor<double> x(4, 1, 1, 1);
  x.data = {-0.3, 0.0, 2.0, -5.0};
  SteBinarize<double> s;
  EXPECT_EQ(s.forward(x).data, (std::vector<double>{-1.0, 1.0, 1.0, -1.0}));
}

TEST(Ste, ReferenceExamples) {
  Tensor<double> x(2, 1, 1, 1);
  x.data = {0.3, -2.0};
  SteBinarize<double> s;
  EXPECT_EQ(s.forward(x).data, (std::vector<double>{1.0, -1.0}));
  x.data = {0.5, 3.0};
  s.forward(x);
  Tensor<double> g(2, 1, 1, 1);
  g.data = {0.7, 0.7};
  EXPECT_EQ(s.backward(g).data, (std::vector<double>{0.7, 0.0}));
}

TEST(Ste, BackwardIsHardTanhStraightThrough) {
  Tensor<double> x(5, 1, 1, 1);
  x.data = {-1.5, -1.0, 0.2, 1.0, 3.0};
  SteBinarize<double> s;
  s.forward(x);
  Tensor<double> dy(5, 1, 1, 1);
  dy.data = {1.0, 2.0, 3.0, 4.0, 5.0};
  EXPECT_EQ(s.backward(dy).data, (std::vector<double>{0.0, 2.0, 3.0, 4.0, 0.0}));
}

TEST(Flatten, LayoutAndInverse) {
  std::mt19937_64 rng(10);
  const auto x = random_tensor(3, 2, 4, 5, rng);
  const auto f = flatten(x);
  ASSERT_EQ(f.channels, 60);
  ASSERT_EQ(f.batch, 2);
  EXPECT_EQ(f.at(2 * 20 + 3 * 5 + 1, 1, 0, 0), x.at(2, 1, 3, 1));
  EXPECT_EQ(unflatten(f, 3, 4, 5).data, x.data);
}

TEST(Refiner, ParameterCountIsPinned) {
  // Per block: (4*16*9+16) + (16*32*9+32) + (32*4*9+4) = 592 + 4640 + 1156.
  EXPECT_EQ(refiner_param_count(RefinerArch{2, 5, 16, 32}), 5u * 6388u);
  RefinerNet<double> net(RefinerArch{2, 5, 16, 32});
  EXPECT_EQ(count_params(net.params()), 31940u);
  EXPECT_EQ(refiner_param_count(RefinerArch{1, 5, 16, 32}), 5u * (304u + 4640u + 578u));
}

TEST(Refiner, ZeroInitIsExactIdentity) {
  std::mt19937_64 rng(11);
  for (auto mode : {InitMode::kZero, InitMode::kResidualZero}) {
    RefinerNet<double> net(RefinerArch{2, 5, 16, 32});
    net.init(mode, 3);
    const auto x = random_tensor(4, 2, 4, 6, rng);
    EXPECT_EQ(net.forward(x).data, x.data);
  }
}

TEST(Refiner, TinyNetMatchesDirectConvolutionChain) {
  std::mt19937_64 rng(21);
  RefinerNet<double> net(RefinerArch{1, 2, 3, 4});
  net.init(InitMode::kXavier, 9);
  for (auto* p : net.params())
    if (p->name.find("bias") != std::string::npos) randomize(*p, rng, 0.1);
  const auto x = random_tensor(2, 1, 4, 4, rng);
  const auto params = net.params();
  const auto lrelu = [](Tensor<double> t) {
    for (auto& v : t.data) v = v > 0 ? v : kLeakySlope * v;
    return t;
  };
  Tensor<double> h = x;
  const int widths[4] = {2, 3, 4, 2};
  for (int b = 0; b < 2; ++b) {
    Tensor<double> z = h;
    for (int l = 0; l < 3; ++l) {
      const auto* w = params[6 * b + 2 * l];
      const auto* bias = params[6 * b + 2 * l + 1];
      z = oracle::conv2d(z, w->value, bias->value, widths[l + 1], 1);
      if (l < 2) z = lrelu(z);
    }
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += std::tanh(z.data[i]);
  }
  EXPECT_LT(max_abs_diff(net.forward(x), h), 1e-13);
}

TEST(Refiner, ForwardIsBitReproducible) {
  std::mt19937_64 rng(22);
  RefinerNet<float> net(RefinerArch{2, 5, 16, 32});
  net.init(InitMode::kXavier, 10);
  const auto x = random_tensor(4, 2, 16, 48, rng).cast<float>();
  const auto a = net.forward(x);
  EXPECT_EQ(net.forward(x).data, a.data);
}

TEST(Refiner, ContractViolations) {
  RefinerNet<double> net(RefinerArch{2, 1, 16, 32});
  EXPECT_THROW(net.backward(Tensor<double>(4, 1, 4, 4)), ContractViolation);
  EXPECT_THROW(net.forward(Tensor<double>(2, 1, 4, 4)), ContractViolation);
}

TEST(Refiner, BatchGradientIsSumOfItemGradients) {
  std::mt19937_64 rng(23);
  RefinerNet<double> net(RefinerArch{1, 2, 16, 32});
  net.init(InitMode::kXavier, 11);
  const auto both = random_tensor(2, 2, 4, 6, rng);
  const auto dy = random_tensor(2, 2, 4, 6, rng);
  const auto item = [](const Tensor<double>& t, int n) {
    Tensor<double> o(t.channels, 1, t.height, t.width);
    for (int c = 0; c < t.channels; ++c)
      for (int y = 0; y < t.height; ++y)
        for (int x = 0; x < t.width; ++x) o.at(c, 0, y, x) = t.at(c, n, y, x);
    return o;
  };
  const auto params = net.params();
  zero_grads(params);
  net.forward(both);
  net.backward(dy);
  std::vector<std::vector<double>> batch;
  for (auto* p : params) batch.push_back(p->grad);
  zero_grads(params);
  for (int n = 0; n < 2; ++n) {
    net.forward(item(both, n));
    net.backward(item(dy, n));
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t j = 0; j < batch[i].size(); ++j)
      ASSERT_NEAR(params[i]->grad[j], batch[i][j], 1e-11 * std::max(1.0, std::abs(batch[i][j])));
}

TEST(Refiner, XavierInitChangesOutputBoundedly) {
  std::mt19937_64 rng(12);
  RefinerNet<double> net(RefinerArch{1, 5, 16, 32});
  net.init(InitMode::kXavier, 4);
  const auto x = random_tensor(2, 1, 4, 6, rng);
  const auto y = net.forward(x);
  const double d = max_abs_diff(x, y);
  EXPECT_GT(d, 0.0);
  EXPECT_LE(d, 5.0);  // each of five residual branches is tanh-bounded
}

TEST(Refiner, BackwardMatchesCentralDifferences) {
  std::mt19937_64 rng(13);
  RefinerNet<double> net(RefinerArch{2, 5, 16, 32});
  net.init(InitMode::kXavier, 5);
  const auto st = gradcheck::check_module(net, net.params(), random_tensor(4, 2, 4, 6, rng), 120,
                                          40, rng, "refiner");
  EXPECT_GE(st.probed, 160);
  EXPECT_TRUE(st.ok()) << st.worst;
}

TEST(Refiner, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(14);
  RefinerNet<double> net(RefinerArch{1, 2, 16, 32});
  net.init(InitMode::kXavier, 6);
  const auto x = random_tensor(2, 2, 4, 6, rng);
  net.forward(x);
  zero_grads(net.params());
  const auto dx = net.backward(Tensor<double>(2, 2, 4, 6));
  for (double v : dx.data) EXPECT_EQ(v, 0.0);
  for (auto* p : net.params())
    for (double g : p->grad) EXPECT_EQ(g, 0.0);
}

TEST(Refiner, BatchItemsAreIndependent) {
  std::mt19937_64 rng(15);
  RefinerNet<double> net(RefinerArch{1, 3, 16, 32});
  net.init(InitMode::kXavier, 7);
  const auto both = random_tensor(2, 2, 4, 6, rng);
  Tensor<double> one(2, 1, 4, 6);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x) one.at(c, 0, y, x) = both.at(c, 1, y, x);
  const auto yb = net.forward(both);
  const auto y1 = net.forward(one);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x) EXPECT_NEAR(yb.at(c, 1, y, x), y1.at(c, 0, y, x), 1e-13);
}

TEST(Refiner, FloatCastTracksDouble) {
  std::mt19937_64 rng(16);
  RefinerNet<double> net(RefinerArch{2, 5, 16, 32});
  net.init(InitMode::kXavier, 8);
  auto f32 = net.cast<float>();
  const auto x = random_tensor(4, 1, 16, 48, rng);
  EXPECT_LT(max_abs_diff(net.forward(x), f32.forward(x.cast<float>()).cast<double>()), 1e-4);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Param<double> p("p", 3);
  p.value = {1.0, -2.0, 0.5};
  p.grad = {0.3, -4.0, 1e-3};
  Adam<double> opt({&p}, AdamOptions{0.01, 0.9, 0.999, 1e-8});
  ASSERT_TRUE(opt.step({&p}));
  EXPECT_NEAR(p.value[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p.value[1], -2.0 + 0.01, 1e-9);
  EXPECT_NEAR(p.value[2], 0.5 - 0.01, 1e-6);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Param<double> p("p", 2);
  p.value = {1.0, 2.0};
  Adam<double> opt({&p}, AdamOptions{});
  for (int i = 0; i < 5; ++i) opt.step({&p});
  EXPECT_EQ(p.value, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(opt.step_count(), 5);
}

TEST(Adam, MinimizesQuadratic) {
  Param<double> p("p", 4);
  const std::vector<double> target{1.0, -0.5, 2.0, 0.25};
  Adam<double> opt({&p}, AdamOptions{0.05, 0.9, 0.999, 1e-8});
  double loss = 0.0;
  for (int it = 0; it < 500; ++it) {
    loss = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double d = p.value[i] - target[i];
      loss += d * d;
      p.grad[i] = 2 * d;
    }
    opt.step({&p});
  }
  EXPECT_LT(loss, 1e-6);
}

TEST(Adam, NonFiniteGradientSkipsStep) {
  Param<double> p("p", 2);
  p.value = {1.0, 2.0};
  p.grad = {0.5, std::numeric_limits<double>::quiet_NaN()};
  Adam<double> opt({&p}, AdamOptions{});
  EXPECT_FALSE(opt.step({&p}));
  EXPECT_EQ(p.value, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(opt.step_count(), 1);
  p.grad = {0.5, std::numeric_limits<double>::infinity()};
  EXPECT_FALSE(opt.step({&p}));
}

TEST(EncDec, ShapesAndBits) {
  EncDecArch arch;
  arch.n_tx = 8;
  arch.n_subcarriers = 12;
  arch.feedback_bits = 16;
  arch.encoder_widths = {4, 4, 8, 8};
  arch.refiner.n_blocks = 1;
  EncDecNet<double> net(arch);
  net.init(InitMode::kResidualZero, 1);
  std::mt19937_64 rng(17);
  const auto y = net.forward(random_tensor(2, 3, 8, 12, rng));
  EXPECT_EQ(y.channels, 2);
  EXPECT_EQ(y.batch, 3);
  EXPECT_EQ(y.height, 8);
  EXPECT_EQ(y.width, 12);
  EXPECT_EQ(net.last_bits().channels, 16);
  for (double b : net.last_bits().data) EXPECT_TRUE(b == 1.0 || b == -1.0);
}

TEST(EncDec, ShortTrainingReducesLoss) {
  EncDecArch arch;
  arch.n_tx = 8;
  arch.n_subcarriers = 12;
  arch.feedback_bits = 32;
  arch.encoder_widths = {4, 4, 8, 8};
  arch.refiner.n_blocks = 1;
  EncDecNet<double> net(arch);
  net.init(InitMode::kResidualZero, 2);
  std::mt19937_64 rng(18);
  const int n = 10;
  std::vector<CMat> truth;
  Tensor<double> x(2, n, 8, 12);
  for (int i = 0; i < n; ++i) {
    truth.push_back(oracle::random_cmat(8, 12, rng));
    write_item(x, i, std::span<const CMat>(&truth.back(), 1));
  }
  std::vector<const CMat*> ptrs;
  for (const auto& h : truth) ptrs.push_back(&h);
  auto params = net.params();
  Adam<double> opt(params, AdamOptions{1e-3});
  std::vector<double> losses;
  for (int it = 0; it < 20; ++it) {
    const auto out = net.forward(x);
    const auto loss = loss_ts_rate(out, std::span<const CMat* const>(ptrs), 1.0, 0.1);
    losses.push_back(loss.value);
    zero_grads(params);
    net.backward(loss.grad);
    opt.step(params);
  }
  EXPECT_LT(losses.back(), losses.front());
}

TEST(TensorLayout, ComplexRoundTrip) {
  std::mt19937_64 rng(19);
  const std::vector<CMat> users{oracle::random_cmat(4, 6, rng), oracle::random_cmat(4, 6, rng)};
  const auto t = complex_to_tensor(users);
  EXPECT_EQ(t.channels, 4);
  EXPECT_EQ(t.at(2, 0, 1, 3), users[1](1, 3).real());
  EXPECT_EQ(t.at(3, 0, 1, 3), users[1](1, 3).imag());
  const auto back = tensor_to_complex(t);
  EXPECT_EQ(back[0], users[0]);
  EXPECT_EQ(back[1], users[1]);
}
