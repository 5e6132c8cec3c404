#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "shufflerl/ppo.hpp"

using namespace shufflerl;

namespace {

// One epoch of 64-sample minibatches over a 256-step buffer on a 20-day,
// 5-ticker window.
void BM_PpoUpdate(benchmark::State& state) {
  ArchitectureSpec spec;
  spec.kind = state.range(0) == 0 ? ExtractorKind::cnn : ExtractorKind::mlp;
  spec.input_height = 20;
  spec.input_width = 86;
  spec.action_dim = 5;
  spec.conv = {{16, 3, 3, 1, 1}, {32, 3, 3, 2, 2}};
  spec.embedding = 64;
  spec.mlp_hidden = {64, 64};
  ActorCritic net(spec, 1);

  Rng rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RolloutBuffer buffer(20, 86, 5);
  std::vector<double> rows(20 * 86);
  for (auto& x : rows) x = u(rng);
  buffer.begin_episode(rows);
  std::vector<double> row(86);
  for (std::size_t s = 0; s < 256; ++s) {
    std::vector<double> action(5);
    for (auto& a : action) a = u(rng);
    buffer.add(action, -4.0, 0.0, u(rng), s == 255);
    if (s == 255) break;
    for (auto& x : row) x = u(rng);
    buffer.push_row(row);
  }
  buffer.finish(0.0, 0.99, 0.95);

  PpoConfig cfg;
  cfg.rollout_length = 256;
  cfg.minibatch_size = 64;
  cfg.epochs_per_update = 1;
  Adam opt(cfg.learning_rate);
  for (auto _ : state) benchmark::DoNotOptimize(update(net, opt, buffer, cfg, rng));
}
BENCHMARK(BM_PpoUpdate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
