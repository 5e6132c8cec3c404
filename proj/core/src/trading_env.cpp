#include "shufflerl/trading_env.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "csv_util.hpp"
#include "shufflerl/errors.hpp"

namespace shufflerl {

void EnvConfig::validate(std::size_t ticker_count) {
  if (!(initial_balance > 0.0) || !std::isfinite(initial_balance))
    throw ConfigError("initial_balance must be positive");
  if (hmax < 1) throw ConfigError("hmax must be >= 1");
  if (!(cost_rate >= 0.0 && cost_rate < 1.0))
    throw ConfigError("cost_rate must lie in [0, 1)");
  if (!(reward_scale > 0.0) || !(balance_scale > 0.0))
    throw ConfigError("reward_scale and balance_scale must be positive");
  if (window_length < 1) throw ConfigError("window_length must be >= 1");

  const FeatureLayout features(ticker_count);
  if (layout == LayoutTag::shuffled) {
    if (!permutation) permutation = ticker_block_permutation(features);
    if (permutation->size() != features.total())
      throw ConfigError(fmt::format("permutation has {} entries, layout needs {}",
                                    permutation->size(), features.total()));
  } else if (permutation) {
    throw ConfigError("a permutation was given but layout is canonical");
  }
}

double portfolio_value(const PortfolioState& state, std::span<const double> prices) {
  if (prices.size() != state.holdings.size())
    throw ShapeError(fmt::format("{} prices for {} holdings", prices.size(),
                                 state.holdings.size()));
  double value = state.balance;
  for (std::size_t i = 0; i < prices.size(); ++i)
    value += prices[i] * static_cast<double>(state.holdings[i]);
  return value;
}

std::vector<std::int64_t> decode_action(std::span<const double> action,
                                        std::int64_t hmax) {
  std::vector<std::int64_t> deltas(action.size());
  for (std::size_t i = 0; i < action.size(); ++i) {
    const double a = std::isnan(action[i]) ? 0.0 : std::clamp(action[i], -1.0, 1.0);
    deltas[i] = static_cast<std::int64_t>(std::trunc(a * static_cast<double>(hmax)));
  }
  return deltas;
}

TradeResult execute_trades(PortfolioState state, std::span<const std::int64_t> deltas,
                           std::span<const double> prices, double cost_rate) {
  const auto d = state.holdings.size();
  if (deltas.size() != d || prices.size() != d)
    throw ShapeError(fmt::format("{} deltas and {} prices for {} holdings",
                                 deltas.size(), prices.size(), d));
  TradeResult result;
  result.executed.assign(d, 0);

  for (std::size_t i = 0; i < d; ++i) {
    if (deltas[i] >= 0) continue;
    const auto q = std::min(-deltas[i], state.holdings[i]);
    if (q == 0) continue;
    const double value = static_cast<double>(q) * prices[i];
    const double cost = value * cost_rate;
    state.balance += value - cost;
    state.holdings[i] -= q;
    result.costs += cost;
    result.executed[i] = -q;
  }

  for (std::size_t i = 0; i < d; ++i) {
    if (deltas[i] <= 0) continue;
    const double unit = prices[i] * (1.0 + cost_rate);
    auto q = std::min<std::int64_t>(
        deltas[i], static_cast<std::int64_t>(std::floor(state.balance / unit)));
    // The floor above can be off by one either way after rounding.
    auto spend = [&](std::int64_t n) {
      const double value = static_cast<double>(n) * prices[i];
      return value + value * cost_rate;
    };
    while (q < deltas[i] && spend(q + 1) <= state.balance) ++q;
    while (q > 0 && spend(q) > state.balance) --q;
    if (q <= 0) continue;
    const double value = static_cast<double>(q) * prices[i];
    const double cost = value * cost_rate;
    state.balance -= value + cost;
    state.holdings[i] += q;
    result.costs += cost;
    result.executed[i] = q;
  }

  state.balance = std::max(state.balance, 0.0);
  state.trade_cost_accum += result.costs;
  result.state = std::move(state);
  return result;
}

TradingEnv::TradingEnv(std::shared_ptr<const MarketDataset> dataset, EnvConfig config)
    : dataset_(std::move(dataset)),
      config_(std::move(config)),
      layout_(dataset_ ? dataset_->ticker_count() : 0) {
  config_.validate(dataset_->ticker_count());
  const auto lookback = config_.turbulence_lookback;
  if (lookback >= dataset_->ticker_count() + 2 &&
      dataset_->day_count() >= lookback + 2) {
    turbulence_ = compute_turbulence(*dataset_, lookback);
  }
}

std::size_t TradingEnv::episode_length(std::size_t start) const {
  const auto need = start + config_.window_length;
  return dataset_->day_count() > need ? dataset_->day_count() - need : 0;
}

const WindowMatrix& TradingEnv::reset(std::size_t start) {
  const auto w = config_.window_length;
  if (start + w >= dataset_->day_count())
    throw DataError(fmt::format(
        "insufficient days: start {} + window {} needs more than {} days in the dataset",
        start, w, dataset_->day_count()));
  state_ = PortfolioState{config_.initial_balance,
                          std::vector<std::int64_t>(layout_.ticker_count(), 0),
                          start + w - 1, 0.0};
  std::vector<FeatureVector> rows;
  rows.reserve(w);
  for (std::size_t t = start; t < start + w; ++t) rows.push_back(observe_day(t));
  window_ = WindowMatrix::init_window(rows, w);
  done_ = false;

  trace_.clear();
  trace_.push_back({dataset_->days()[state_.day_index], state_.balance,
                    portfolio_value(state_, dataset_->closes(state_.day_index)), 0.0,
                    0.0, turbulence_at(state_.day_index), state_.holdings});
  return *window_;
}

const WindowMatrix& TradingEnv::observation() const {
  if (!window_) throw StateError("environment has not been reset");
  return *window_;
}

FeatureVector TradingEnv::observe_day(std::size_t day) const {
  auto v = build_feature_vector(layout_, state_.balance, dataset_->closes(day),
                                state_.holdings, dataset_->ratios(day),
                                config_.balance_scale);
  if (config_.layout == LayoutTag::shuffled) v = apply_permutation(v, *config_.permutation);
  return v;
}

std::optional<double> TradingEnv::turbulence_at(std::size_t day) const {
  if (day < turbulence_.values.size()) return turbulence_.values[day];
  return std::nullopt;
}

StepResult TradingEnv::step(std::span<const double> action) {
  if (done_) throw StateError("step() called on a finished episode; call reset()");
  if (action.size() != layout_.ticker_count())
    throw ShapeError(fmt::format("action has {} components, environment trades {} tickers",
                                 action.size(), layout_.ticker_count()));

  const auto today = state_.day_index;
  const auto prices_today = dataset_->closes(today);
  const double value_before = portfolio_value(state_, prices_today);

  auto trade = execute_trades(state_, decode_action(action, config_.hmax),
                              prices_today, config_.cost_rate);
  state_ = std::move(trade.state);
  state_.day_index = today + 1;

  const auto tomorrow = state_.day_index;
  const double value_after = portfolio_value(state_, dataset_->closes(tomorrow));
  const double reward = (value_after - value_before) * config_.reward_scale;

  window_->slide(observe_day(tomorrow));
  done_ = tomorrow + 1 >= dataset_->day_count();

  StepInfo info{value_after, turbulence_at(tomorrow), trade.costs,
                std::move(trade.executed)};
  trace_.push_back({dataset_->days()[tomorrow], state_.balance, value_after, reward,
                    trade.costs, info.turbulence, state_.holdings});
  return StepResult{std::cref(*window_), reward, done_, std::move(info)};
}

void write_trace_csv(std::span<const TraceRow> trace,
                     std::span<const std::string> tickers, std::ostream& out) {
  out << "day,balance,portfolio_value,reward,costs,turbulence";
  for (const auto& t : tickers) out << ",holding_" << t;
  out << '\n';
  for (const auto& row : trace) {
    out << row.date.to_string() << ',' << detail::format_double(row.balance) << ','
        << detail::format_double(row.portfolio_value) << ','
        << detail::format_double(row.reward) << ',' << detail::format_double(row.costs)
        << ',';
    if (row.turbulence) out << detail::format_double(*row.turbulence);
    for (auto h : row.holdings) out << ',' << h;
    out << '\n';
  }
}

EpisodeResult run_episode(TradingEnv& env, const Policy& policy, double gamma,
                          std::size_t start) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  EpisodeResult result;
  const WindowMatrix* obs = &env.reset(start);
  result.values.push_back(
      portfolio_value(env.state(), env.dataset().closes(env.state().day_index)));
  double discount = 1.0;
  while (!env.done()) {
    auto action = policy(*obs);
    auto step = env.step(action);
    result.discounted_return += discount * step.reward;
    discount *= gamma;
    result.values.push_back(step.info.portfolio_value);
    result.total_costs += step.info.costs;
    result.trajectory.push_back(
        {std::move(action), step.reward, std::move(step.info.executed)});
    obs = &step.observation.get();
  }
  return result;
}

}  // namespace shufflerl
