#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace shufflerl {

inline constexpr double kTradingDaysPerYear = 252.0;

/// r_t = v_t / v_{t-1} - 1; needs at least two values.
std::vector<double> daily_returns(std::span<const double> values);

/// sqrt(annualization) * (mean(r) - risk_free) / sample_std(r).
/// Throws UndefinedMetricError when the sample std is zero.
double sharpe_ratio(std::span<const double> returns, double risk_free = 0.0,
                    double annualization = kTradingDaysPerYear);

/// v_last / v_first - 1
double cumulative_return(std::span<const double> values);

struct MetricsReport {
  /// Absent when the returns have zero variance.
  std::optional<double> sharpe;
  std::optional<double> sharpe_daily;
  double cumulative_return = 0.0;
  double total_costs = 0.0;
  double max_value = 0.0;
  double min_value = 0.0;
  std::size_t n_days = 0;
};

MetricsReport summarize(std::span<const double> values, double total_costs,
                        double risk_free = 0.0,
                        double annualization = kTradingDaysPerYear);

void to_json(nlohmann::json& j, const MetricsReport& report);

/// One logged episode: cumulative scaled reward at the timestep it ended.
struct CurvePoint {
  std::size_t timestep = 0;
  std::size_t episode = 0;
  double reward = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct LabeledCurve {
  std::string label;
  std::vector<CurvePoint> points;
};

struct ComparisonRow {
  std::string label;
  double final_reward = 0.0;
  double mean_reward = 0.0;
  double peak_reward = 0.0;
};

struct PairwiseDifference {
  std::string a, b;
  /// a minus b
  double final_diff = 0.0;
  double mean_diff = 0.0;
  double peak_diff = 0.0;
};

struct AlignedPoint {
  std::size_t timestep = 0;
  std::string label;
  /// Latest reward logged at or before `timestep`; absent before the first.
  std::optional<double> reward;
};

struct Comparison {
  /// Sorted by final reward, best first.
  std::vector<ComparisonRow> rows;
  std::vector<PairwiseDifference> pairwise;
  std::vector<AlignedPoint> aligned;
};

Comparison compare_runs(std::span<const LabeledCurve> curves);

void write_comparison_csv(const Comparison& comparison, std::ostream& out);
void write_aligned_csv(const Comparison& comparison, std::ostream& out);

}  // namespace shufflerl
