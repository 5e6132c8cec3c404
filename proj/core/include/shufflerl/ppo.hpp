#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "shufflerl/features.hpp"
#include "shufflerl/metrics.hpp"
#include "shufflerl/network.hpp"
#include "shufflerl/trading_env.hpp"

namespace shufflerl {

using Rng = std::mt19937_64;

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  double learning_rate = 3e-4;
  std::size_t rollout_length = 2048;
  std::size_t minibatch_size = 64;
  std::size_t epochs_per_update = 10;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  std::size_t total_timesteps = 100'000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Trajectory store. Observations are windows of consecutive rows, so each
/// step stores only the row it adds instead of a full window copy.
class RolloutBuffer {
 public:
  RolloutBuffer(std::size_t window_rows, std::size_t row_width, std::size_t action_dim);

  /// Starts a new episode whose first observation is `window`.
  void begin_episode(const WindowMatrix& window);
  /// Same, from raw rows (oldest first, window_rows * row_width values).
  void begin_episode(std::span<const double> rows);
  /// Extends the current episode's observation by one row.
  void push_row(std::span<const double> row);

  /// Records a step taken from the current observation.
  void add(std::span<const double> action, double log_prob, double value, double reward,
           bool done);

  /// Fills advantages and returns by GAE.
  void finish(double bootstrap_value, double gamma, double lambda);

  std::size_t size() const { return log_probs_.size(); }
  std::size_t action_dim() const { return action_dim_; }
  Shape4 observation_shape(std::size_t batch) const {
    return {batch, 1, window_rows_, row_width_};
  }

  /// Stacks the observations of `indices` into (n, 1, window_rows, row_width).
  Array4 gather_observations(std::span<const std::size_t> indices) const;

  std::span<const double> actions() const { return actions_; }
  std::span<const double> log_probs() const { return log_probs_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> rewards() const { return rewards_; }
  const std::vector<bool>& dones() const { return dones_; }
  std::span<const double> advantages() const { return advantages_; }
  std::span<const double> returns() const { return returns_; }

  void clear();

 private:
  std::size_t window_rows_, row_width_, action_dim_;
  std::vector<double> rows_;
  std::size_t row_count_ = 0;
  std::size_t episode_rows_ = 0;
  std::vector<std::size_t> obs_end_;
  std::vector<double> actions_;
  std::vector<double> log_probs_;
  std::vector<double> values_;
  std::vector<double> rewards_;
  std::vector<bool> dones_;
  std::vector<double> advantages_;
  std::vector<double> returns_;
};

/// log density of a diagonal Gaussian at x.
double gaussian_log_prob(std::span<const double> x, std::span<const double> mean,
                         std::span<const double> log_std);

/// Entropy of a diagonal Gaussian (independent of the mean).
double gaussian_entropy(std::span<const double> log_std);

std::vector<double> sample_gaussian(std::span<const double> mean,
                                    std::span<const double> log_std, Rng& rng);

struct ActionSample {
  /// Raw, unclipped sample; the environment clips when decoding.
  std::vector<double> action;
  double log_prob = 0.0;
  double value = 0.0;
};

/// Samples from the policy at a single observation (batch 1), inference mode.
ActionSample sample_action(const ActorCritic& network, const Array4& observation,
                           Rng& rng);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// delta_t = r_t + gamma v_{t+1} (1 - done_t) - v_t,
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}, returns = A + v.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      const std::vector<bool>& dones, double bootstrap_value,
                      double gamma, double lambda);

/// min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)
double clipped_surrogate(double ratio, double advantage, double epsilon);

/// (a - mean) / (population std + 1e-8); a constant batch maps to 0.
std::vector<double> normalize_advantages(std::span<const double> advantages);

struct PpoMinibatch {
  std::size_t action_dim = 0;
  std::span<const double> actions;  // size * action_dim
  std::span<const double> old_log_probs;
  std::span<const double> advantages;  // already normalized
  std::span<const double> returns;
  std::size_t size() const { return old_log_probs.size(); }
};

struct LossCoefficients {
  double clip_epsilon = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
};

struct PpoLossResult {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  /// d loss / d means, (size, action_dim, 1, 1)
  Array4 d_means;
  std::vector<double> d_log_std;
  std::vector<double> d_values;
};

/// policy = -mean(clipped surrogate), value = mean((v - R)^2),
/// loss = policy + value_coef * value - entropy_coef * entropy.
PpoLossResult ppo_loss(const ActorCritic::Output& out, std::span<const double> log_std,
                       const PpoMinibatch& batch, const LossCoefficients& coefs);

/// Adaptive-moment gradient descent over a network's trainable parameters.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);

  void step(std::span<const ParamRef> params);
  double learning_rate() const { return lr_; }
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Scales trainable gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
double clip_grad_norm(std::span<const ParamRef> params, double max_norm);

struct UpdateStats {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  std::size_t minibatches = 0;
};

/// Re-estimates batch-norm running statistics with train-mode passes over the
/// buffer's observations in chunks of `chunk`, in buffer order, cycling until
/// at least `min_batches` chunks have been seen. No-op without batch norm.
void refresh_batch_norm(ActorCritic& network, const RolloutBuffer& buffer,
                        std::size_t chunk, std::size_t min_batches = 1);

/// Chunks needed to leave under 0.1% weight on the previous running
/// statistics at momentum 0.1.
inline constexpr std::size_t kCalibrationBatches = 66;

/// epochs_per_update passes over shuffled minibatches of a finished buffer.
/// The loss is evaluated with batch norm in inference mode, the same function
/// that generated the rollout; running statistics are refreshed from the
/// buffer afterwards.
UpdateStats update(ActorCritic& network, Adam& optimizer, const RolloutBuffer& buffer,
                   const PpoConfig& config, Rng& rng);

/// Optional per-agent network overrides; unset fields keep the defaults.
struct ArchitectureOverrides {
  std::optional<std::vector<ConvLayerSpec>> conv;
  std::optional<std::size_t> embedding;
  std::optional<std::vector<std::size_t>> mlp_hidden;
  std::optional<bool> separate_value_trunk;
};

struct AgentSpec {
  std::string name = "cnn";
  ExtractorKind extractor = ExtractorKind::cnn;
  LayoutTag layout = LayoutTag::canonical;
  /// Shuffled layouts default to the ticker-block permutation.
  std::optional<PermutationSpec> permutation;
  ArchitectureOverrides overrides;

  /// "mlp", "cnn" or "cnn-shuffled".
  static AgentSpec preset(std::string_view name);
};

/// Env config with the agent's layout and permutation applied.
EnvConfig configure_env(EnvConfig base, const AgentSpec& agent, std::size_t ticker_count);

ArchitectureSpec make_architecture(const AgentSpec& agent, const EnvConfig& env,
                                   std::size_t ticker_count);

struct TrainCallbacks {
  std::function<void(std::size_t update, const UpdateStats&)> on_update;
  std::function<void(const CurvePoint&)> on_episode;
};

struct TrainResult {
  ActorCritic network;
  std::vector<CurvePoint> curve;
  std::vector<UpdateStats> stats;
  std::size_t updates = 0;
  std::size_t timesteps = 0;
};

/// Alternates rollout collection and updates for
/// floor(total_timesteps / rollout_length) updates.
TrainResult train(std::shared_ptr<const MarketDataset> dataset, const EnvConfig& env,
                  const AgentSpec& agent, const PpoConfig& config,
                  const TrainCallbacks& callbacks = {});

struct EvaluationReport {
  /// Sum of scaled rewards over the episode.
  double cumulative_reward = 0.0;
  MetricsReport metrics;
  std::vector<double> values;
  std::vector<TraceRow> trace;
};

/// Deterministic rollout (action = mean) over the whole dataset slice.
EvaluationReport evaluate(const ActorCritic& network,
                          std::shared_ptr<const MarketDataset> dataset,
                          const EnvConfig& env);

/// Copies a window into a (1, 1, rows, cols) array.
Array4 window_to_array(const WindowMatrix& window);

}  // namespace shufflerl
