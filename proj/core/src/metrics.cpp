#include "shufflerl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "csv_util.hpp"
#include "shufflerl/errors.hpp"

namespace shufflerl {

std::vector<double> daily_returns(std::span<const double> values) {
  if (values.size() < 2)
    throw UndefinedMetricError("daily returns need at least two values");
  std::vector<double> r(values.size() - 1);
  for (std::size_t t = 1; t < values.size(); ++t) {
    if (!(values[t - 1] > 0.0))
      throw UndefinedMetricError(fmt::format("non-positive value {} at index {}",
                                             values[t - 1], t - 1));
    r[t - 1] = values[t] / values[t - 1] - 1.0;
  }
  return r;
}

double sharpe_ratio(std::span<const double> returns, double risk_free,
                    double annualization) {
  if (returns.size() < 2)
    throw UndefinedMetricError("Sharpe ratio needs at least two returns");
  if (!(annualization > 0.0)) throw ConfigError("annualization must be positive");
  const double n = static_cast<double>(returns.size());
  const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
  double sq = 0.0;
  for (double r : returns) sq += (r - mean) * (r - mean);
  const double stddev = std::sqrt(sq / (n - 1.0));
  if (stddev == 0.0)
    throw UndefinedMetricError("Sharpe ratio is undefined for zero-variance returns");
  return std::sqrt(annualization) * (mean - risk_free) / stddev;
}

double cumulative_return(std::span<const double> values) {
  if (values.empty()) throw UndefinedMetricError("cumulative return of an empty series");
  if (!(values.front() > 0.0))
    throw UndefinedMetricError("cumulative return needs a positive starting value");
  return values.back() / values.front() - 1.0;
}

MetricsReport summarize(std::span<const double> values, double total_costs,
                        double risk_free, double annualization) {
  MetricsReport report;
  report.n_days = values.size();
  report.total_costs = total_costs;
  report.cumulative_return = cumulative_return(values);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  report.min_value = *lo;
  report.max_value = *hi;
  if (values.size() >= 3) {
    const auto returns = daily_returns(values);
    try {
      report.sharpe = sharpe_ratio(returns, risk_free, annualization);
      report.sharpe_daily = sharpe_ratio(returns, risk_free, 1.0);
    } catch (const UndefinedMetricError&) {
    }
  }
  return report;
}

void to_json(nlohmann::json& j, const MetricsReport& report) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  j = {{"sharpe", opt(report.sharpe)},
       {"sharpe_daily", opt(report.sharpe_daily)},
       {"cumulative_return", report.cumulative_return},
       {"total_costs", report.total_costs},
       {"max_value", report.max_value},
       {"min_value", report.min_value},
       {"n_days", report.n_days}};
}

Comparison compare_runs(std::span<const LabeledCurve> curves) {
  if (curves.size() < 2) throw ConfigError("comparison needs at least two curves");
  Comparison out;
  std::set<std::size_t> timesteps;
  for (const auto& c : curves) {
    if (c.points.empty())
      throw DataError(fmt::format("curve '{}' is empty", c.label));
    ComparisonRow row{c.label, c.points.back().reward, 0.0, c.points.front().reward};
    for (const auto& p : c.points) {
      row.mean_reward += p.reward;
      row.peak_reward = std::max(row.peak_reward, p.reward);
      timesteps.insert(p.timestep);
    }
    row.mean_reward /= static_cast<double>(c.points.size());
    out.rows.push_back(row);
  }
  for (std::size_t a = 0; a < out.rows.size(); ++a)
    for (std::size_t b = a + 1; b < out.rows.size(); ++b) {
      const auto& ra = out.rows[a];
      const auto& rb = out.rows[b];
      out.pairwise.push_back({ra.label, rb.label, ra.final_reward - rb.final_reward,
                              ra.mean_reward - rb.mean_reward,
                              ra.peak_reward - rb.peak_reward});
    }
  std::stable_sort(out.rows.begin(), out.rows.end(), [](const auto& x, const auto& y) {
    return x.final_reward > y.final_reward;
  });

  for (const auto& c : curves) {
    std::size_t next = 0;
    std::optional<double> held;
    for (auto t : timesteps) {
      while (next < c.points.size() && c.points[next].timestep <= t)
        held = c.points[next++].reward;
      out.aligned.push_back({t, c.label, held});
    }
  }
  std::stable_sort(out.aligned.begin(), out.aligned.end(),
                   [](const auto& x, const auto& y) { return x.timestep < y.timestep; });
  return out;
}

void write_comparison_csv(const Comparison& comparison, std::ostream& out) {
  out << "rank,label,final_reward,mean_reward,peak_reward\n";
  for (std::size_t i = 0; i < comparison.rows.size(); ++i) {
    const auto& r = comparison.rows[i];
    out << i + 1 << ',' << r.label << ',' << detail::format_double(r.final_reward) << ','
        << detail::format_double(r.mean_reward) << ','
        << detail::format_double(r.peak_reward) << '\n';
  }
}

void write_aligned_csv(const Comparison& comparison, std::ostream& out) {
  out << "timestep,label,reward\n";
  for (const auto& p : comparison.aligned) {
    out << p.timestep << ',' << p.label << ',';
    if (p.reward) out << detail::format_double(*p.reward);
    out << '\n';
  }
}

}  // namespace shufflerl
