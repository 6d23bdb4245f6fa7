/**
 * @file bench_main.cpp
 * @brief Microbenchmarks for the hot paths: refiner passes, convolution,
 * codebook encoders and zero-forcing.
 */
#include "csiforge/channel.hpp"
#include "csiforge/codebook.hpp"
#include "csiforge/nn/models.hpp"
#include "csiforge/precoding.hpp"
#include "csiforge/util.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace csiforge;

namespace {

template <typename T>
nn::Tensor<T> random_tensor(int c, int n, int h, int w, std::uint64_t seed) {
  nn::Tensor<T> t(c, n, h, w);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 0.25);
  for (auto& v : t.data) v = static_cast<T>(d(rng));
  return t;
}

template <typename T>
void BM_RefinerForwardBackward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  nn::RefinerArch arch;
  arch.n_users = static_cast<int>(state.range(1));
  nn::RefinerNet<T> net(arch);
  net.init(nn::InitMode::kXavier, 1);
  const auto x = random_tensor<T>(arch.channels(), batch, 16, 48, 2);
  const auto g = random_tensor<T>(arch.channels(), batch, 16, 48, 3);
  for (auto _ : state) {
    auto y = net.forward(x);
    benchmark::DoNotOptimize(y.data.data());
    auto dx = net.backward(g);
    benchmark::DoNotOptimize(dx.data.data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK_TEMPLATE(BM_RefinerForwardBackward, float)->Args({32, 1})->Args({32, 2});
BENCHMARK_TEMPLATE(BM_RefinerForwardBackward, double)->Args({32, 1});

void BM_RefinerForward(benchmark::State& state) {
  nn::RefinerNet<double> net(nn::RefinerArch{});
  net.init(nn::InitMode::kXavier, 1);
  const auto x = random_tensor<double>(2, 32, 16, 48, 2);
  for (auto _ : state) {
    auto y = net.forward(x);
    benchmark::DoNotOptimize(y.data.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_RefinerForward);

void BM_Conv(benchmark::State& state) {
  const int cin = static_cast<int>(state.range(0)), cout = static_cast<int>(state.range(1));
  nn::Conv2d<float> conv(cin, cout, 1, "c");
  std::mt19937_64 rng(4);
  conv.init_xavier(rng);
  const auto x = random_tensor<float>(cin, 32, 16, 48, 5);
  const auto g = random_tensor<float>(cout, 32, 16, 48, 6);
  for (auto _ : state) {
    auto y = conv.forward(x);
    benchmark::DoNotOptimize(y.data.data());
    auto dx = conv.backward(g);
    benchmark::DoNotOptimize(dx.data.data());
  }
}
BENCHMARK(BM_Conv)->Args({2, 16})->Args({16, 32})->Args({32, 2});

channel::Dataset bench_data() {
  return channel::generate_dataset(channel::desk_scenario(), 2, 16, std::nullopt, 9);
}

void BM_TypeIIEncode(benchmark::State& state) {
  const auto ds = bench_data();
  const codebook::TypeIIConfig cfg{4, static_cast<int>(state.range(0)), 4};
  const auto map = codebook::SubbandMap::even(48, 4);
  std::size_t i = 0;
  for (auto _ : state) {
    auto r = codebook::typeII_encode(ds.records[i++ % ds.records.size()].estimates[0], cfg, map);
    benchmark::DoNotOptimize(r.beam_combo);
  }
}
BENCHMARK(BM_TypeIIEncode)->Arg(2)->Arg(4);

void BM_TypeIEncode(benchmark::State& state) {
  const auto ds = bench_data();
  const codebook::TypeIConfig cfg{static_cast<int>(state.range(0))};
  std::size_t i = 0;
  for (auto _ : state) {
    auto r = codebook::typeI_encode(ds.records[i++ % ds.records.size()].estimates[0], cfg);
    benchmark::DoNotOptimize(r.beam_index);
  }
}
BENCHMARK(BM_TypeIEncode)->Arg(1)->Arg(4);

void BM_ZeroForcing(benchmark::State& state) {
  const auto ds = bench_data();
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& rec = ds.records[i++ % ds.records.size()];
    std::vector<CMat> h{rec.users[0].freq, rec.users[1].freq};
    auto f = precoding::zero_forcing(h, 1.0);
    benchmark::DoNotOptimize(f.per_subcarrier.data());
  }
}
BENCHMARK(BM_ZeroForcing);

}  // namespace

int main(int argc, char** argv) {
  util::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
