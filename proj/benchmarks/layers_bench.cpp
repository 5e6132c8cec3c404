#include <random>

#include <benchmark/benchmark.h>

#include "shufflerl/layers.hpp"
#include "shufflerl/network.hpp"

using namespace shufflerl;

namespace {

Array4 noise(Shape4 shape) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  Array4 a(shape);
  for (auto& x : a.values()) x = n(rng);
  return a;
}

// First layer of the default network on a (batch, 1, 90, 511) window.
void BM_Conv2dForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  auto p = ConvParams::zeros(16, 1, 8, 8, 4, 4);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& w : p.weight) w = n(rng);
  const auto x = noise({batch, 1, 90, 511});
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, p));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Conv2dForward)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  auto p = ConvParams::zeros(16, 1, 8, 8, 4, 4);
  const auto x = noise({8, 1, 90, 511});
  const auto up = noise(conv2d_output_shape(x.shape(), p));
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(x, p, up));
}
BENCHMARK(BM_Conv2dBackward)->Unit(benchmark::kMillisecond);

void BM_ActorCriticInfer(benchmark::State& state) {
  ArchitectureSpec spec;
  spec.kind = state.range(0) == 0 ? ExtractorKind::cnn : ExtractorKind::mlp;
  const ActorCritic net(spec, 3);
  const auto x = noise(net.input_shape(1));
  for (auto _ : state) benchmark::DoNotOptimize(net.infer(x));
}
BENCHMARK(BM_ActorCriticInfer)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
