#include <cmath>
#include <string>

#include "shufflerl/errors.hpp"
#include "shufflerl/market_data.hpp"
#include "unit_support.hpp"

using namespace shufflerl;

namespace {

std::string ratio_header() {
  std::string h = "date,ticker";
  for (auto name : kRatioNames) h += fmt::format(",{}", name);
  return h + "\n";
}

std::string ratio_row(const std::string& date, const std::string& ticker, double v) {
  std::string r = date + "," + ticker;
  for (std::size_t j = 0; j < kRatioCount; ++j) r += fmt::format(",{}", v + j);
  return r + "\n";
}

template <class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(LoadPrices, ParsesRows) {
  const auto dir = unit::scratch();
  const auto path = unit::write_file(dir / "p.csv",
                                     "date,ticker,close\n2015-01-02,AXP,93.02\n"
                                     "2015-01-05,AXP,90.56\n2015-01-06,AXP,88.63\n");
  const auto table = load_prices(path);
  ASSERT_EQ(table.rows.size(), 3u);
  EXPECT_EQ(table.rows[1].date, unit::day(2015, 1, 5));
  EXPECT_EQ(table.rows[2].close, 88.63);
}

TEST(LoadPrices, NegativeCloseNamesRow) {
  const auto dir = unit::scratch();
  const auto path = unit::write_file(
      dir / "p.csv", "date,ticker,close\n2015-01-02,AXP,1\n2015-01-05,AXP,-5.0\n");
  try {
    load_prices(path);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadPrices, DuplicateKey) {
  const auto dir = unit::scratch();
  const auto path = unit::write_file(
      dir / "p.csv", "date,ticker,close\n2015-01-02,AXP,1\n2015-01-02,AXP,2\n");
  EXPECT_NE(error_of([&] { load_prices(path); }).find("duplicate"), std::string::npos);
}

TEST(LoadFundamentals, ParsesQuarterlyRows) {
  const auto dir = unit::scratch();
  const auto path = unit::write_file(dir / "f.csv", ratio_header() +
                                                        ratio_row("2015-01-02", "AXP", 1) +
                                                        ratio_row("2015-04-01", "AXP", 2));
  const auto table = load_fundamentals(path);
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(table.rows[1].ratios[14], 16.0);
}

TEST(LoadFundamentals, FourteenColumnsIsSchemaError) {
  const auto dir = unit::scratch();
  std::string header = "date,ticker";
  for (std::size_t j = 0; j + 1 < kRatioCount; ++j) header += fmt::format(",{}", kRatioNames[j]);
  const auto path = unit::write_file(dir / "f.csv", header + "\n");
  EXPECT_THROW(load_fundamentals(path), ParseError);
}

TEST(LoadFundamentals, NanCellNamed) {
  const auto dir = unit::scratch();
  auto row = ratio_row("2015-01-02", "AXP", 1);
  row.replace(row.find(",3,"), 3, ",nan,");
  const auto path = unit::write_file(dir / "f.csv", ratio_header() + row);
  const auto message = error_of([&] { load_fundamentals(path); });
  EXPECT_NE(message.find("quick_ratio"), std::string::npos) << message;
}

class ForwardFill : public ::testing::Test {
 protected:
  PriceTable prices() {
    const auto dir = unit::scratch();
    std::string text = "date,ticker,close\n";
    for (int d = 1; d <= 5; ++d) text += fmt::format("2015-01-0{},AXP,{}\n", d, 10 + d);
    return load_prices(unit::write_file(dir / "p.csv", text));
  }
  FundamentalTable fundamentals(const std::string& rows) {
    const auto dir = unit::scratch();
    return load_fundamentals(unit::write_file(dir / "f.csv", ratio_header() + rows));
  }
};

TEST_F(ForwardFill, SingleReportCarriesForward) {
  const auto p = prices();
  const auto ds = align_forward_fill(p, fundamentals(ratio_row("2015-01-01", "AXP", 7)));
  ASSERT_EQ(ds.day_count(), 5u);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(ds.ratios(t, 0)[0], 7.0);
}

TEST_F(ForwardFill, SecondReportTakesOver) {
  const auto p = prices();
  const auto ds = align_forward_fill(
      p, fundamentals(ratio_row("2015-01-01", "AXP", 1) + ratio_row("2015-01-04", "AXP", 2)));
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(ds.ratios(t, 0)[0], 1.0);
  for (std::size_t t = 3; t < 5; ++t) EXPECT_EQ(ds.ratios(t, 0)[0], 2.0);
}

TEST_F(ForwardFill, TickerWithoutFundamentals) {
  const auto dir = unit::scratch();
  const auto p = load_prices(unit::write_file(
      dir / "p.csv", "date,ticker,close\n2015-01-02,AXP,1\n2015-01-02,XYZ,2\n"));
  const auto message =
      error_of([&] { align_forward_fill(p, fundamentals(ratio_row("2015-01-01", "AXP", 1))); });
  EXPECT_NE(message.find("XYZ"), std::string::npos) << message;
}

TEST(Synthetic, FlatWalkIsExactlyHundred) {
  SyntheticMarketParams params;
  params.tickers = 3;
  params.days = 40;
  params.volatility = 0.0;
  const auto ds = generate_synthetic_market(params);
  for (std::size_t t = 0; t < ds.day_count(); ++t)
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(ds.close(t, i), 100.0);
}

TEST(Synthetic, SameSeedSameDataset) {
  SyntheticMarketParams params;
  params.seed = 11;
  params.tickers = 4;
  params.days = 120;
  EXPECT_EQ(generate_synthetic_market(params), generate_synthetic_market(params));
  auto other = params;
  other.seed = 12;
  EXPECT_FALSE(generate_synthetic_market(params) == generate_synthetic_market(other));
}

TEST(Synthetic, DriftMatchesClosedForm) {
  SyntheticMarketParams params;
  params.tickers = 2;
  params.days = 250;
  params.drift = 0.002;
  params.volatility = 0.0;
  const auto ds = generate_synthetic_market(params);
  for (std::size_t t = 0; t < ds.day_count(); ++t) {
    const double expected = 100.0 * std::pow(1.002, static_cast<double>(t));
    EXPECT_NEAR(ds.close(t, 1), expected, 1e-10 * expected) << "day " << t;
  }
}

TEST(Turbulence, HandMahalanobis) {
  const std::vector<double> dev = {1.0, 2.0};
  const std::vector<double> identity = {1.0, 0.0, 0.0, 1.0};
  EXPECT_DOUBLE_EQ(mahalanobis_squared(dev, identity), 5.0);
  const std::vector<double> zero = {0.0, 0.0};
  EXPECT_EQ(mahalanobis_squared(zero, identity), 0.0);
}

TEST(Turbulence, ConstantPricesGiveZero) {
  std::vector<std::vector<double>> closes(40, {50.0, 70.0});
  const auto ds = unit::market(closes);
  const auto series = compute_turbulence(*ds, 10);
  std::size_t defined = 0;
  for (std::size_t t = 0; t < series.values.size(); ++t) {
    EXPECT_EQ(series.values[t].has_value(), t >= 11) << "day " << t;
    if (series.values[t]) {
      EXPECT_EQ(*series.values[t], 0.0);
      ++defined;
    }
  }
  EXPECT_EQ(defined, 29u);
}

TEST(Split, EightyTwenty) {
  SyntheticMarketParams params;
  params.tickers = 1;
  params.days = 100;
  const auto ds = generate_synthetic_market(params);
  const auto [train, test] = split_by_date(ds, ds.days()[80]);
  EXPECT_EQ(train.day_count(), 80u);
  EXPECT_EQ(test.day_count(), 20u);
  EXPECT_EQ(test.days().front(), ds.days()[80]);
}

TEST(Split, BoundaryBeforeFirstDay) {
  SyntheticMarketParams params;
  params.tickers = 1;
  params.days = 10;
  const auto ds = generate_synthetic_market(params);
  EXPECT_THROW(split_by_date(ds, unit::day(2000, 1, 1)), Error);
}

TEST(Date, StrictIso) {
  EXPECT_TRUE(Date::parse("2023-01-31"));
  EXPECT_FALSE(Date::parse("2023-02-30"));
  EXPECT_FALSE(Date::parse("2023-1-31"));
  EXPECT_EQ(unit::day(2023, 1, 31).to_string(), "2023-01-31");
}
