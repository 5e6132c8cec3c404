#include "shufflerl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "shufflerl/errors.hpp"

namespace shufflerl {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;  // log(2 pi)
// Log-ratios beyond this are clamped (with zero gradient) so exp stays finite.
constexpr double kMaxLogRatio = 20.0;

}  // namespace

void PpoConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw ConfigError(fmt::format("gamma must lie in [0, 1], got {}", gamma));
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0))
    throw ConfigError(fmt::format("gae_lambda must lie in [0, 1], got {}", gae_lambda));
  if (!(clip_epsilon > 0.0))
    throw ConfigError(fmt::format("clip_epsilon must be positive, got {}", clip_epsilon));
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError(fmt::format("learning_rate must be non-negative, got {}", learning_rate));
  if (rollout_length == 0) throw ConfigError("rollout_length must be positive");
  if (minibatch_size == 0) throw ConfigError("minibatch_size must be positive");
  if (epochs_per_update == 0) throw ConfigError("epochs_per_update must be positive");
  if (!(value_coef >= 0.0)) throw ConfigError("value_coef must be non-negative");
  if (!(entropy_coef >= 0.0)) throw ConfigError("entropy_coef must be non-negative");
  if (!(max_grad_norm > 0.0)) throw ConfigError("max_grad_norm must be positive");
}

RolloutBuffer::RolloutBuffer(std::size_t window_rows, std::size_t row_width,
                             std::size_t action_dim)
    : window_rows_(window_rows), row_width_(row_width), action_dim_(action_dim) {
  if (window_rows == 0 || row_width == 0 || action_dim == 0)
    throw ConfigError("rollout buffer dimensions must be positive");
}

void RolloutBuffer::begin_episode(const WindowMatrix& window) {
  if (window.rows() != window_rows_ || window.cols() != row_width_)
    throw ShapeError(fmt::format("window {}x{} does not match buffer {}x{}", window.rows(),
                                 window.cols(), window_rows_, row_width_));
  std::vector<double> rows(window_rows_ * row_width_);
  window.copy_to(rows);
  begin_episode(rows);
}

void RolloutBuffer::begin_episode(std::span<const double> rows) {
  if (rows.size() != window_rows_ * row_width_)
    throw ShapeError(fmt::format("episode start has {} values, expected {}", rows.size(),
                                 window_rows_ * row_width_));
  rows_.insert(rows_.end(), rows.begin(), rows.end());
  row_count_ += window_rows_;
  episode_rows_ = window_rows_;
}

void RolloutBuffer::push_row(std::span<const double> row) {
  if (episode_rows_ == 0) throw StateError("push_row before begin_episode");
  if (row.size() != row_width_)
    throw ShapeError(fmt::format("row has {} values, expected {}", row.size(), row_width_));
  rows_.insert(rows_.end(), row.begin(), row.end());
  ++row_count_;
  ++episode_rows_;
}

void RolloutBuffer::add(std::span<const double> action, double log_prob, double value,
                        double reward, bool done) {
  if (episode_rows_ == 0) throw StateError("add before begin_episode");
  if (action.size() != action_dim_)
    throw ShapeError(fmt::format("action has {} components, expected {}", action.size(),
                                 action_dim_));
  obs_end_.push_back(row_count_);
  actions_.insert(actions_.end(), action.begin(), action.end());
  log_probs_.push_back(log_prob);
  values_.push_back(value);
  rewards_.push_back(reward);
  dones_.push_back(done);
}

void RolloutBuffer::finish(double bootstrap_value, double gamma, double lambda) {
  auto gae = compute_gae(rewards_, values_, dones_, bootstrap_value, gamma, lambda);
  check_finite(gae.advantages, "advantages");
  advantages_ = std::move(gae.advantages);
  returns_ = std::move(gae.returns);
}

Array4 RolloutBuffer::gather_observations(std::span<const std::size_t> indices) const {
  Array4 out(observation_shape(indices.size()));
  const std::size_t item = window_rows_ * row_width_;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= obs_end_.size())
      throw ShapeError(fmt::format("observation index {} out of range", indices[k]));
    const std::size_t first = (obs_end_[indices[k]] - window_rows_) * row_width_;
    std::copy_n(rows_.begin() + static_cast<std::ptrdiff_t>(first), item,
                out.values().begin() + static_cast<std::ptrdiff_t>(k * item));
  }
  return out;
}

void RolloutBuffer::clear() {
  rows_.clear();
  row_count_ = 0;
  episode_rows_ = 0;
  obs_end_.clear();
  actions_.clear();
  log_probs_.clear();
  values_.clear();
  rewards_.clear();
  dones_.clear();
  advantages_.clear();
  returns_.clear();
}

double gaussian_log_prob(std::span<const double> x, std::span<const double> mean,
                         std::span<const double> log_std) {
  if (x.size() != mean.size() || x.size() != log_std.size())
    throw ShapeError("gaussian_log_prob: mismatched dimensions");
  double lp = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - mean[i]) * std::exp(-log_std[i]);
    lp += -0.5 * z * z - log_std[i] - 0.5 * kLogTwoPi;
  }
  return lp;
}

double gaussian_entropy(std::span<const double> log_std) {
  double h = 0.0;
  for (double s : log_std) h += s + 0.5 * (kLogTwoPi + 1.0);
  return h;
}

std::vector<double> sample_gaussian(std::span<const double> mean,
                                    std::span<const double> log_std, Rng& rng) {
  if (mean.size() != log_std.size())
    throw ShapeError("sample_gaussian: mismatched dimensions");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i)
    out[i] = mean[i] + std::exp(log_std[i]) * normal(rng);
  return out;
}

ActionSample sample_action(const ActorCritic& network, const Array4& observation,
                           Rng& rng) {
  if (observation.shape() != network.input_shape(1))
    throw ShapeError(fmt::format("observation {} does not match network input {}",
                                 observation.shape().to_string(),
                                 network.input_shape(1).to_string()));
  const auto out = network.infer(observation);
  check_finite(out.means, "policy_head");
  check_finite(out.values, "value_head");
  ActionSample s;
  s.action = sample_gaussian(out.means.values(), network.log_std(), rng);
  s.log_prob = gaussian_log_prob(s.action, out.means.values(), network.log_std());
  s.value = out.values[0];
  return s;
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      const std::vector<bool>& dones, double bootstrap_value,
                      double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw ShapeError(fmt::format("compute_gae: {} rewards, {} values, {} dones", n,
                                 values.size(), dones.size()));
  GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  double next_adv = 0.0;
  double next_value = bootstrap_value;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + values[k];
    next_value = values[k];
  }
  return out;
}

double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

std::vector<double> normalize_advantages(std::span<const double> advantages) {
  std::vector<double> out(advantages.begin(), advantages.end());
  if (out.empty()) return out;
  const double n = static_cast<double>(out.size());
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / n;
  double sq = 0.0;
  for (double a : out) sq += (a - mean) * (a - mean);
  const double stddev = std::sqrt(sq / n);
  for (double& a : out) a = stddev > 0.0 ? (a - mean) / (stddev + 1e-8) : 0.0;
  return out;
}

PpoLossResult ppo_loss(const ActorCritic::Output& out, std::span<const double> log_std,
                       const PpoMinibatch& batch, const LossCoefficients& coefs) {
  const std::size_t b = batch.size();
  const std::size_t a = batch.action_dim;
  if (b == 0) throw ShapeError("ppo_loss: empty minibatch");
  if (out.means.shape() != Shape4{b, a, 1, 1} || out.values.size() != b ||
      batch.actions.size() != b * a || batch.advantages.size() != b ||
      batch.returns.size() != b || log_std.size() != a)
    throw ShapeError("ppo_loss: minibatch and network output disagree");

  PpoLossResult r;
  r.d_means = Array4(Shape4{b, a, 1, 1});
  r.d_log_std.assign(a, 0.0);
  r.d_values.assign(b, 0.0);
  const double inv_b = 1.0 / static_cast<double>(b);
  std::vector<double> inv_var(a);
  for (std::size_t i = 0; i < a; ++i) inv_var[i] = std::exp(-2.0 * log_std[i]);

  for (std::size_t k = 0; k < b; ++k) {
    const auto act = batch.actions.subspan(k * a, a);
    const auto mu = out.means.item(k);
    const double lp = gaussian_log_prob(act, mu, log_std);
    const double raw_log_ratio = lp - batch.old_log_probs[k];
    const double log_ratio = std::clamp(raw_log_ratio, -kMaxLogRatio, kMaxLogRatio);
    const double ratio = std::exp(log_ratio);
    const double adv = batch.advantages[k];
    const double clipped =
        std::clamp(ratio, 1.0 - coefs.clip_epsilon, 1.0 + coefs.clip_epsilon);
    r.policy_loss -= std::min(ratio * adv, clipped * adv) * inv_b;
    if (std::abs(ratio - 1.0) > coefs.clip_epsilon) r.clip_fraction += inv_b;
    r.approx_kl += ((ratio - 1.0) - log_ratio) * inv_b;

    // d policy_loss / d log_prob; zero when the clipped branch is active.
    if (ratio * adv <= clipped * adv && log_ratio == raw_log_ratio) {
      const double g = -ratio * adv * inv_b;
      for (std::size_t i = 0; i < a; ++i) {
        const double diff = act[i] - mu[i];
        r.d_means[k * a + i] = g * diff * inv_var[i];
        r.d_log_std[i] += g * (diff * diff * inv_var[i] - 1.0);
      }
    }

    const double err = out.values[k] - batch.returns[k];
    r.value_loss += err * err * inv_b;
    r.d_values[k] = coefs.value_coef * 2.0 * err * inv_b;
  }
  r.entropy = gaussian_entropy(log_std);
  for (auto& g : r.d_log_std) g -= coefs.entropy_coef;
  r.loss = r.policy_loss + coefs.value_coef * r.value_loss - coefs.entropy_coef * r.entropy;
  if (!std::isfinite(r.loss))
    throw NumericError(fmt::format("ppo_loss: non-finite loss (policy {}, value {})",
                                   r.policy_loss, r.value_loss));
  return r;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
}

void Adam::step(std::span<const ParamRef> params) {
  std::size_t trainable = 0;
  for (const auto& p : params) trainable += p.trainable ? 1 : 0;
  if (m_.empty()) {
    for (const auto& p : params)
      if (p.trainable) {
        m_.emplace_back(p.value.size(), 0.0);
        v_.emplace_back(p.value.size(), 0.0);
      }
  } else if (m_.size() != trainable) {
    throw ShapeError("Adam: parameter set changed between steps");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t slot = 0;
  for (const auto& p : params) {
    if (!p.trainable) continue;
    auto& m = m_[slot];
    auto& v = v_[slot];
    ++slot;
    if (m.size() != p.value.size()) throw ShapeError("Adam: parameter size changed");
    check_finite(p.grad, p.name);
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
      p.value[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

double clip_grad_norm(std::span<const ParamRef> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.trainable)
      for (double g : p.grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("gradient norm is not finite");
  if (norm > max_norm) {
    const double scale = max_norm / (norm + 1e-6);
    for (const auto& p : params)
      if (p.trainable)
        for (double& g : p.grad) g *= scale;
  }
  return norm;
}

void refresh_batch_norm(ActorCritic& network, const RolloutBuffer& buffer,
                        std::size_t chunk, std::size_t min_batches) {
  if (!network.has_batch_norm()) return;
  const std::size_t n = buffer.size();
  if (n == 0 || chunk == 0) throw StateError("refresh_batch_norm on an empty buffer");
  std::vector<std::size_t> idx;
  std::size_t seen = 0;
  while (seen < min_batches || seen == 0) {
    for (std::size_t first = 0; first < n; first += chunk) {
      const std::size_t last = std::min(n, first + chunk);
      idx.resize(last - first);
      std::iota(idx.begin(), idx.end(), first);
      network.forward(buffer.gather_observations(idx), BnMode::train);
      ++seen;
    }
  }
}

UpdateStats update(ActorCritic& network, Adam& optimizer, const RolloutBuffer& buffer,
                   const PpoConfig& config, Rng& rng) {
  const std::size_t n = buffer.size();
  if (n == 0) throw StateError("update on an empty buffer");
  if (buffer.advantages().size() != n) throw StateError("update before finish()");
  const std::size_t a = buffer.action_dim();
  const LossCoefficients coefs{config.clip_epsilon, config.value_coef,
                               config.entropy_coef};

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> actions, old_lp, adv, ret;
  UpdateStats stats;

  for (std::size_t epoch = 0; epoch < config.epochs_per_update; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t first = 0; first < n; first += config.minibatch_size) {
      const std::size_t last = std::min(n, first + config.minibatch_size);
      const std::span<const std::size_t> idx(order.data() + first, last - first);
      actions.clear();
      old_lp.clear();
      adv.clear();
      ret.clear();
      for (auto k : idx) {
        const auto act = buffer.actions().subspan(k * a, a);
        actions.insert(actions.end(), act.begin(), act.end());
        old_lp.push_back(buffer.log_probs()[k]);
        adv.push_back(buffer.advantages()[k]);
        ret.push_back(buffer.returns()[k]);
      }
      const auto norm_adv = normalize_advantages(adv);
      const PpoMinibatch batch{a, actions, old_lp, norm_adv, ret};

      network.zero_grad();
      const auto out = network.forward(buffer.gather_observations(idx), BnMode::inference);
      const auto loss = ppo_loss(out, network.log_std(), batch, coefs);
      network.backward(loss.d_means, loss.d_values);
      auto ls_grad = network.log_std_grad();
      for (std::size_t i = 0; i < a; ++i) ls_grad[i] += loss.d_log_std[i];

      const auto params = network.parameters();
      stats.grad_norm += clip_grad_norm(params, config.max_grad_norm);
      optimizer.step(params);
      network.clamp_log_std();

      stats.loss += loss.loss;
      stats.policy_loss += loss.policy_loss;
      stats.value_loss += loss.value_loss;
      stats.entropy += loss.entropy;
      stats.clip_fraction += loss.clip_fraction;
      stats.approx_kl += loss.approx_kl;
      ++stats.minibatches;
    }
  }
  refresh_batch_norm(network, buffer, config.minibatch_size);
  const double m = static_cast<double>(stats.minibatches);
  stats.loss /= m;
  stats.policy_loss /= m;
  stats.value_loss /= m;
  stats.entropy /= m;
  stats.clip_fraction /= m;
  stats.approx_kl /= m;
  stats.grad_norm /= m;
  return stats;
}

Array4 window_to_array(const WindowMatrix& window) {
  Array4 out(Shape4{1, 1, window.rows(), window.cols()});
  window.copy_to(out.values());
  return out;
}

}  // namespace shufflerl
