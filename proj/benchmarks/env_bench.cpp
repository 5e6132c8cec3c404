#include <memory>
#include <numeric>
#include <random>

#include <benchmark/benchmark.h>

#include "shufflerl/features.hpp"
#include "shufflerl/trading_env.hpp"

using namespace shufflerl;

namespace {

std::shared_ptr<const MarketDataset> market() {
  SyntheticMarketParams params;
  params.seed = 5;
  params.tickers = 30;
  params.days = 600;
  return std::make_shared<const MarketDataset>(generate_synthetic_market(params));
}

void BM_EnvStep(benchmark::State& state) {
  EnvConfig cfg;
  cfg.layout = state.range(0) == 0 ? LayoutTag::canonical : LayoutTag::shuffled;
  TradingEnv env(market(), cfg);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> action(30);
  env.reset(0);
  for (auto _ : state) {
    for (auto& a : action) a = u(rng);
    if (env.done()) env.reset(0);
    benchmark::DoNotOptimize(env.step(action).reward);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EnvStep)->Arg(0)->Arg(1);

void BM_ApplyPermutation(benchmark::State& state) {
  const FeatureLayout layout(static_cast<std::size_t>(state.range(0)));
  const auto p = ticker_block_permutation(layout);
  FeatureVector v;
  v.values.resize(layout.total());
  std::iota(v.values.begin(), v.values.end(), 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(apply_permutation(v, p));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(layout.total() * sizeof(double)));
}
BENCHMARK(BM_ApplyPermutation)->Arg(30)->Arg(500);

}  // namespace
