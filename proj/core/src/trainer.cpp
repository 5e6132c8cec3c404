#include <fmt/format.h>

#include "shufflerl/errors.hpp"
#include "shufflerl/ppo.hpp"

namespace shufflerl {

AgentSpec AgentSpec::preset(std::string_view name) {
  AgentSpec spec;
  spec.name = std::string(name);
  if (name == "mlp") {
    spec.extractor = ExtractorKind::mlp;
  } else if (name == "cnn") {
    spec.extractor = ExtractorKind::cnn;
  } else if (name == "cnn-shuffled") {
    spec.extractor = ExtractorKind::cnn;
    spec.layout = LayoutTag::shuffled;
  } else {
    throw ConfigError(
        fmt::format("unknown agent '{}' (expected mlp, cnn or cnn-shuffled)", name));
  }
  return spec;
}

EnvConfig configure_env(EnvConfig base, const AgentSpec& agent, std::size_t ticker_count) {
  base.layout = agent.layout;
  base.permutation = agent.permutation;
  base.validate(ticker_count);
  return base;
}

ArchitectureSpec make_architecture(const AgentSpec& agent, const EnvConfig& env,
                                   std::size_t ticker_count) {
  ArchitectureSpec spec;
  spec.kind = agent.extractor;
  spec.input_height = env.window_length;
  spec.input_width = FeatureLayout(ticker_count).total();
  spec.action_dim = ticker_count;
  const auto& o = agent.overrides;
  if (o.conv) spec.conv = *o.conv;
  if (o.embedding) spec.embedding = *o.embedding;
  if (o.mlp_hidden) spec.mlp_hidden = *o.mlp_hidden;
  if (o.separate_value_trunk) spec.separate_value_trunk = *o.separate_value_trunk;
  spec.validate();
  return spec;
}

TrainResult train(std::shared_ptr<const MarketDataset> dataset, const EnvConfig& env,
                  const AgentSpec& agent, const PpoConfig& config,
                  const TrainCallbacks& callbacks) {
  if (!dataset) throw ConfigError("train: no dataset");
  config.validate();
  const std::size_t tickers = dataset->ticker_count();
  const EnvConfig env_config = configure_env(env, agent, tickers);
  TrainResult result{ActorCritic(make_architecture(agent, env_config, tickers), config.seed),
                     {}, {}, 0, 0};
  ActorCritic& net = result.network;

  TradingEnv environment(dataset, env_config);
  environment.reset(0);
  RolloutBuffer buffer(env_config.window_length, environment.layout().total(), tickers);
  Adam optimizer(config.learning_rate);
  std::seed_seq seq{config.seed, std::uint64_t{0x70706f}};
  Rng rng(seq);

  const std::size_t updates = config.total_timesteps / config.rollout_length;
  if (updates > 0 && net.has_batch_norm()) {
    // Running statistics start at (0, 1) while raw features are far from
    // that; seed them from a walk with zero-mean actions at the initial
    // exploration scale, which approximates the first rollout's states.
    TradingEnv walk(dataset, env_config);
    RolloutBuffer calibration(env_config.window_length, walk.layout().total(), tickers);
    calibration.begin_episode(walk.reset(0));
    const std::vector<double> zero(tickers, 0.0);
    std::vector<double> log_std(tickers, net.spec().log_std_init);
    Rng walk_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t s = 0; s < config.rollout_length; ++s) {
      const auto action = sample_gaussian(zero, log_std, walk_rng);
      calibration.add(action, 0.0, 0.0, 0.0, false);
      const auto step = walk.step(action);
      if (step.done)
        calibration.begin_episode(walk.reset(0));
      else
        calibration.push_row(step.observation.get().newest());
    }
    refresh_batch_norm(net, calibration, config.minibatch_size, kCalibrationBatches);
  }

  std::size_t episode = 0;
  double episode_reward = 0.0;

  for (std::size_t u = 0; u < updates; ++u) {
    buffer.clear();
    buffer.begin_episode(environment.observation());
    for (std::size_t s = 0; s < config.rollout_length; ++s) {
      const auto sample = sample_action(net, window_to_array(environment.observation()), rng);
      const auto step = environment.step(sample.action);
      ++result.timesteps;
      episode_reward += step.reward;
      buffer.add(sample.action, sample.log_prob, sample.value, step.reward, step.done);
      if (step.done) {
        const CurvePoint point{result.timesteps, episode++, episode_reward};
        result.curve.push_back(point);
        if (callbacks.on_episode) callbacks.on_episode(point);
        episode_reward = 0.0;
        buffer.begin_episode(environment.reset(0));
      } else {
        buffer.push_row(step.observation.get().newest());
      }
    }
    double bootstrap = 0.0;
    if (!buffer.dones().back())
      bootstrap = net.infer(window_to_array(environment.observation())).values[0];
    buffer.finish(bootstrap, config.gamma, config.gae_lambda);
    result.stats.push_back(update(net, optimizer, buffer, config, rng));
    ++result.updates;
    if (callbacks.on_update) callbacks.on_update(u, result.stats.back());
  }
  return result;
}

EvaluationReport evaluate(const ActorCritic& network,
                          std::shared_ptr<const MarketDataset> dataset,
                          const EnvConfig& env) {
  if (!dataset) throw ConfigError("evaluate: no dataset");
  const std::size_t tickers = dataset->ticker_count();
  const auto& spec = network.spec();
  const FeatureLayout layout(tickers);
  if (spec.input_height != env.window_length || spec.input_width != layout.total() ||
      spec.action_dim != tickers)
    throw ShapeError(fmt::format(
        "checkpoint expects {}x{} observations and {} actions; env provides {}x{} and {}",
        spec.input_height, spec.input_width, spec.action_dim, env.window_length,
        layout.total(), tickers));
  if (dataset->day_count() <= env.window_length)
    throw DataError(fmt::format("slice shorter than window: {} days, window {}",
                                dataset->day_count(), env.window_length));

  TradingEnv environment(dataset, env);
  const Policy policy = [&network](const WindowMatrix& obs) {
    const auto out = network.infer(window_to_array(obs));
    check_finite(out.means, "policy_head");
    const auto m = out.means.values();
    return std::vector<double>(m.begin(), m.end());
  };
  const auto episode = run_episode(environment, policy, 1.0, 0);

  EvaluationReport report;
  for (const auto& t : episode.trajectory) report.cumulative_reward += t.reward;
  report.metrics = summarize(episode.values, episode.total_costs);
  report.values = episode.values;
  report.trace = environment.trace();
  return report;
}

}  // namespace shufflerl
