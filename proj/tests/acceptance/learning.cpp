#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include <fmt/format.h>

#include "criteria.hpp"
#include "oracles.hpp"
#include "shufflerl/ppo.hpp"

namespace acceptance {

using namespace shufflerl;

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Context c in {0, 1} arrives one-hot; the rewarded action sign is +1 for
// c = 1 and -1 for c = 0. Each step is a one-step episode.
struct BanditRun {
  double final_probability = 0.0;
  int first_hit = -1;
};

Array4 context_obs(int c) {
  return Array4(Shape4{1, 1, 1, 2}, {c == 0 ? 1.0 : 0.0, c == 1 ? 1.0 : 0.0});
}

double optimal_probability(const ActorCritic& net) {
  const double sigma = std::exp(net.log_std()[0]);
  const double mu0 = net.infer(context_obs(0)).means[0];
  const double mu1 = net.infer(context_obs(1)).means[0];
  return std::min(normal_cdf(-mu0 / sigma), normal_cdf(mu1 / sigma));
}

BanditRun run_bandit(std::uint64_t seed) {
  ArchitectureSpec spec;
  spec.kind = ExtractorKind::mlp;
  spec.input_height = 1;
  spec.input_width = 2;
  spec.action_dim = 1;
  spec.mlp_hidden = {32, 32};
  ActorCritic net(spec, seed);

  PpoConfig cfg;
  cfg.rollout_length = 128;
  cfg.minibatch_size = 32;
  cfg.epochs_per_update = 4;
  cfg.learning_rate = 1e-3;
  cfg.seed = seed;
  Adam opt(cfg.learning_rate);
  Rng rng(seed * 7919 + 1);
  RolloutBuffer buffer(1, 2, 1);

  BanditRun run;
  for (int u = 0; u < 200; ++u) {
    buffer.clear();
    for (std::size_t s = 0; s < cfg.rollout_length; ++s) {
      const int c = static_cast<int>(rng() % 2);
      const auto obs = context_obs(c);
      buffer.begin_episode(obs.values());
      const auto sample = sample_action(net, obs, rng);
      const bool correct = (sample.action[0] > 0.0) == (c == 1);
      buffer.add(sample.action, sample.log_prob, sample.value, correct ? 1.0 : 0.0, true);
    }
    buffer.finish(0.0, cfg.gamma, cfg.gae_lambda);
    update(net, opt, buffer, cfg, rng);
    run.final_probability = optimal_probability(net);
    if (run.first_hit < 0 && run.final_probability >= 0.9) run.first_hit = u + 1;
  }
  return run;
}

}  // namespace

Outcome ppo_bandit() {
  int passed = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto run = run_bandit(seed);
    if (run.first_hit > 0) ++passed;
    detail += fmt::format("seed {}: p>=0.9 at update {}, final p={:.4f}; ", seed,
                          run.first_hit, run.final_probability);
  }
  return {passed == 3, fmt::format("{}{}/3 seeds", detail, passed)};
}

Outcome ppo_uptrend() {
  SyntheticMarketParams params;
  params.seed = 11;
  params.tickers = 1;
  params.days = 300;
  params.drift = 0.002;
  params.volatility = 0.0;
  const auto data = std::make_shared<const MarketDataset>(generate_synthetic_market(params));

  EnvConfig env;
  env.window_length = 10;
  std::vector<double> series;
  for (std::size_t t = 0; t < data->day_count(); ++t) series.push_back(data->close(t, 0));
  const double oracle = oracle::buy_and_hold_reward(
      series, env.window_length - 1, env.initial_balance, env.hmax, env.cost_rate,
      env.reward_scale);

  AgentSpec agent = AgentSpec::preset("cnn");
  agent.overrides.conv = std::vector<ConvLayerSpec>{{16, 3, 3, 1, 1}, {32, 3, 3, 2, 2}};
  agent.overrides.embedding = 64;

  int passed = 0;
  std::string detail = fmt::format("buy-and-hold {:.6f}; ", oracle);
  for (std::uint64_t seed : {1, 2, 3}) {
    PpoConfig cfg;
    cfg.seed = seed;
    cfg.rollout_length = 1024;
    cfg.minibatch_size = 64;
    cfg.epochs_per_update = 10;
    cfg.learning_rate = 1e-3;
    cfg.value_coef = 5.0;
    cfg.total_timesteps = 15 * 1024;
    const auto trained = train(data, env, agent, cfg);
    const auto report = evaluate(trained.network, data, configure_env(env, agent, 1));
    const double ratio = report.cumulative_reward / oracle;
    if (ratio >= 0.9) ++passed;
    detail += fmt::format("seed {}: {:.6f} ({:.1f}%); ", seed, report.cumulative_reward,
                          100.0 * ratio);
  }
  return {passed >= 2, fmt::format("{}{}/3 seeds", detail, passed)};
}

}  // namespace acceptance
