#include <cmath>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "shufflerl/errors.hpp"
#include "shufflerl/metrics.hpp"

using namespace shufflerl;

namespace {

LabeledCurve curve(std::string label, std::vector<double> rewards) {
  LabeledCurve c{std::move(label), {}};
  for (std::size_t k = 0; k < rewards.size(); ++k)
    c.points.push_back({(k + 1) * 100, k + 1, rewards[k]});
  return c;
}

}  // namespace

TEST(DailyReturns, HandRatios) {
  EXPECT_EQ(daily_returns(std::vector<double>{100.0, 110.0}), (std::vector<double>{110.0 / 100.0 - 1.0}));
  const auto r = daily_returns(std::vector<double>{100.0, 110.0, 99.0});
  ASSERT_EQ(r.size(), 2u);
  EXPECT_NEAR(r[0], 0.10, 1e-15);
  EXPECT_NEAR(r[1], -0.10, 1e-15);
  for (double x : daily_returns(std::vector<double>(5, 7.0))) EXPECT_EQ(x, 0.0);
}

TEST(Sharpe, ZeroVarianceIsUndefined) {
  EXPECT_THROW(sharpe_ratio(std::vector<double>(4, 0.01)), UndefinedMetricError);
  const auto report = summarize(std::vector<double>(6, 100.0), 0.0);
  EXPECT_FALSE(report.sharpe.has_value());
  EXPECT_EQ(report.cumulative_return, 0.0);
}

TEST(Sharpe, ReferenceValueAndSymmetry) {
  const std::vector<double> r = {0.01, -0.01, 0.02, 0.00};
  EXPECT_NEAR(sharpe_ratio(r), 6.148170459575759, 1e-12 * 6.15);
  const std::vector<double> neg = {-0.01, 0.01, -0.02, 0.00};
  EXPECT_EQ(sharpe_ratio(neg), -sharpe_ratio(r));
}

TEST(CumulativeReturn, Examples) {
  EXPECT_EQ(cumulative_return(std::vector<double>{5.0, 5.0, 5.0}), 0.0);
  EXPECT_EQ(cumulative_return(std::vector<double>{1'000'000.0, 2'000'000.0}), 1.0);
  EXPECT_EQ(cumulative_return(std::vector<double>{100.0, 80.0, 50.0}), -0.5);
}

TEST(Summarize, Extremes) {
  const auto report = summarize(std::vector<double>{100.0, 120.0, 90.0, 110.0}, 3.5);
  EXPECT_EQ(report.max_value, 120.0);
  EXPECT_EQ(report.min_value, 90.0);
  EXPECT_EQ(report.total_costs, 3.5);
  EXPECT_EQ(report.n_days, 4u);
  EXPECT_TRUE(report.sharpe.has_value());
}

TEST(CompareRuns, IdenticalCurvesHaveZeroDifferences) {
  const std::vector<LabeledCurve> curves = {curve("a", {1, 2, 3}), curve("b", {1, 2, 3})};
  const auto cmp = compare_runs(curves);
  ASSERT_EQ(cmp.pairwise.size(), 1u);
  EXPECT_EQ(cmp.pairwise[0].final_diff, 0.0);
  EXPECT_EQ(cmp.pairwise[0].mean_diff, 0.0);
  EXPECT_EQ(cmp.pairwise[0].peak_diff, 0.0);
}

TEST(CompareRuns, ScaledCurveDoublesFinal) {
  const std::vector<LabeledCurve> curves = {curve("b", {1, 3, 2}), curve("a", {2, 6, 4})};
  const auto cmp = compare_runs(curves);
  ASSERT_EQ(cmp.rows.size(), 2u);
  EXPECT_EQ(cmp.rows[0].label, "a");
  EXPECT_EQ(cmp.rows[0].final_reward, 2 * cmp.rows[1].final_reward);
  EXPECT_EQ(cmp.rows[0].peak_reward, 6.0);
  EXPECT_EQ(cmp.rows[0].mean_reward, 4.0);
}

TEST(CompareRuns, RowsSortedByFinalReward) {
  const std::vector<LabeledCurve> curves = {curve("low", {5, -1}), curve("high", {0, 9}),
                                            curve("mid", {3, 4})};
  const auto cmp = compare_runs(curves);
  ASSERT_EQ(cmp.rows.size(), 3u);
  EXPECT_EQ(cmp.rows[0].label, "high");
  EXPECT_EQ(cmp.rows[1].label, "mid");
  EXPECT_EQ(cmp.rows[2].label, "low");
  EXPECT_EQ(cmp.pairwise.size(), 3u);
}

TEST(CompareRuns, AlignedCarriesLatestReward) {
  LabeledCurve late{"late", {{250, 1, 7.0}}};
  const std::vector<LabeledCurve> curves = {curve("early", {1, 2, 3}), late};
  const auto cmp = compare_runs(curves);
  for (const auto& p : cmp.aligned) {
    if (p.label != "late") continue;
    if (p.timestep < 250) EXPECT_FALSE(p.reward.has_value()) << p.timestep;
    else EXPECT_EQ(p.reward, 7.0) << p.timestep;
  }
  std::ostringstream csv;
  write_comparison_csv(cmp, csv);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "rank,label,final_reward,mean_reward,peak_reward");
}
