#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "shufflerl/features.hpp"
#include "shufflerl/market_data.hpp"

namespace shufflerl {

struct EnvConfig {
  double initial_balance = 1'000'000.0;
  /// Shares per unit action, per ticker per step.
  std::int64_t hmax = 100;
  /// Fraction of trade value charged on each side.
  double cost_rate = 0.001;
  double reward_scale = 1e-6;
  double balance_scale = 1e-6;
  std::size_t window_length = 90;
  LayoutTag layout = LayoutTag::canonical;
  /// Required when layout is shuffled; defaults to the ticker-block order.
  std::optional<PermutationSpec> permutation;
  std::size_t turbulence_lookback = kDefaultTurbulenceLookback;

  /// Throws ConfigError; fills in the default permutation for shuffled mode.
  void validate(std::size_t ticker_count);
};

struct PortfolioState {
  double balance = 0.0;
  std::vector<std::int64_t> holdings;
  std::size_t day_index = 0;
  double trade_cost_accum = 0.0;
};

/// balance + sum_i prices_i * holdings_i
double portfolio_value(const PortfolioState& state, std::span<const double> prices);

/// Clips each component to [-1, 1] and truncates a_i * hmax toward zero.
std::vector<std::int64_t> decode_action(std::span<const double> action,
                                        std::int64_t hmax);

struct TradeResult {
  PortfolioState state;
  double costs = 0.0;
  std::vector<std::int64_t> executed;
};

/// Sells first (capped at holdings), then buys (capped at what the remaining
/// balance affords including costs), each phase in ticker order.
TradeResult execute_trades(PortfolioState state, std::span<const std::int64_t> deltas,
                           std::span<const double> prices, double cost_rate);

struct StepInfo {
  double portfolio_value = 0.0;
  std::optional<double> turbulence;
  double costs = 0.0;
  std::vector<std::int64_t> executed;
};

struct StepResult {
  std::reference_wrapper<const WindowMatrix> observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// One row per recorded day of an episode.
struct TraceRow {
  Date date;
  double balance = 0.0;
  double portfolio_value = 0.0;
  double reward = 0.0;
  double costs = 0.0;
  std::optional<double> turbulence;
  std::vector<std::int64_t> holdings;
};

void write_trace_csv(std::span<const TraceRow> trace,
                     std::span<const std::string> tickers, std::ostream& out);

/// The portfolio MDP over an immutable dataset. Single-threaded; independent
/// instances may share a dataset.
class TradingEnv {
 public:
  TradingEnv(std::shared_ptr<const MarketDataset> dataset, EnvConfig config);

  /// Starts an episode whose first observation covers days
  /// start..start+window_length-1.
  const WindowMatrix& reset(std::size_t start = 0);

  StepResult step(std::span<const double> action);

  bool done() const { return done_; }
  const PortfolioState& state() const { return state_; }
  const WindowMatrix& observation() const;
  const EnvConfig& config() const { return config_; }
  const FeatureLayout& layout() const { return layout_; }
  const MarketDataset& dataset() const { return *dataset_; }
  std::size_t action_dim() const { return layout_.ticker_count(); }
  /// Steps in an episode started at `start`.
  std::size_t episode_length(std::size_t start = 0) const;
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  FeatureVector observe_day(std::size_t day) const;
  std::optional<double> turbulence_at(std::size_t day) const;

  std::shared_ptr<const MarketDataset> dataset_;
  EnvConfig config_;
  FeatureLayout layout_;
  TurbulenceSeries turbulence_;
  PortfolioState state_;
  std::optional<WindowMatrix> window_;
  bool done_ = true;
  std::vector<TraceRow> trace_;
};

using Policy = std::function<std::vector<double>(const WindowMatrix&)>;

struct Transition {
  std::vector<double> action;
  double reward = 0.0;
  std::vector<std::int64_t> executed;
};

struct EpisodeResult {
  std::vector<Transition> trajectory;
  /// sum_d gamma^(d-1) r_d
  double discounted_return = 0.0;
  /// Raw portfolio value at reset followed by the value after each step.
  std::vector<double> values;
  double total_costs = 0.0;
};

/// Runs `policy` from a fresh reset at `start` until the episode ends.
EpisodeResult run_episode(TradingEnv& env, const Policy& policy, double gamma,
                          std::size_t start = 0);

}  // namespace shufflerl
