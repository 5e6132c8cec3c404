#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace shufflerl {

inline constexpr std::size_t kRatioCount = 15;

/// Column names of the fundamentals file, in feature order: liquidity,
/// leverage, efficiency, profitability, market value.
inline constexpr std::array<std::string_view, kRatioCount> kRatioNames = {
    "current_ratio",        "cash_ratio",          "quick_ratio",
    "debt_ratio",           "debt_to_equity",      "inventory_turnover",
    "receivables_turnover", "payables_turnover",   "operating_margin",
    "net_profit_margin",    "return_on_assets",    "return_on_equity",
    "earnings_per_share",   "book_per_share",      "dividend_per_share",
};

using Ratios = std::array<double, kRatioCount>;

/// Calendar day, stored as days since the Unix epoch.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::chrono::sys_days day) : day_(day) {}

  /// Parses strict ISO-8601 `YYYY-MM-DD`; nullopt on anything else.
  static std::optional<Date> parse(std::string_view text);
  /// Like parse, but throws ConfigError.
  static Date from_string(std::string_view text);

  std::string to_string() const;
  std::chrono::sys_days sys_days() const { return day_; }
  Date next_day() const { return Date(day_ + std::chrono::days{1}); }

  friend constexpr auto operator<=>(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days day_{};
};

struct PriceRow {
  Date date;
  std::string ticker;
  double close = 0.0;
  std::size_t line = 0;
};

/// Rows of a `date,ticker,close` file, in file order.
struct PriceTable {
  std::filesystem::path source;
  std::vector<PriceRow> rows;
};

struct FundamentalRow {
  Date date;
  std::string ticker;
  Ratios ratios{};
  std::size_t line = 0;
};

/// Sparse (typically quarterly) ratio observations.
struct FundamentalTable {
  std::filesystem::path source;
  std::vector<FundamentalRow> rows;
};

/// Dense, immutable day x ticker grid of closes and ratios.
class MarketDataset {
 public:
  MarketDataset(std::vector<std::string> tickers, std::vector<Date> days,
                std::vector<double> closes, std::vector<Ratios> ratios);

  std::size_t ticker_count() const { return tickers_.size(); }
  std::size_t day_count() const { return days_.size(); }
  const std::vector<std::string>& tickers() const { return tickers_; }
  const std::vector<Date>& days() const { return days_; }

  double close(std::size_t day, std::size_t ticker) const {
    return closes_[day * tickers_.size() + ticker];
  }
  std::span<const double> closes(std::size_t day) const {
    return {closes_.data() + day * tickers_.size(), tickers_.size()};
  }
  const Ratios& ratios(std::size_t day, std::size_t ticker) const {
    return ratios_[day * tickers_.size() + ticker];
  }
  std::span<const Ratios> ratios(std::size_t day) const {
    return {ratios_.data() + day * tickers_.size(), tickers_.size()};
  }

  /// Days [first, last) as a new dataset.
  MarketDataset slice(std::size_t first, std::size_t last) const;

  friend bool operator==(const MarketDataset&, const MarketDataset&) = default;

 private:
  std::vector<std::string> tickers_;
  std::vector<Date> days_;
  std::vector<double> closes_;
  std::vector<Ratios> ratios_;
};

PriceTable load_prices(const std::filesystem::path& path);
FundamentalTable load_fundamentals(const std::filesystem::path& path);

/// Builds the dense grid, carrying each ticker's latest ratio observation
/// forward to every later price day. Leading days on which some ticker has
/// no observation yet are dropped.
MarketDataset align_forward_fill(const PriceTable& prices,
                                 const FundamentalTable& fundamentals);

/// Dense tables for a dataset: one row per (day, ticker) in both.
PriceTable to_price_table(const MarketDataset& dataset);
FundamentalTable to_fundamental_table(const MarketDataset& dataset);

void write_prices_csv(const MarketDataset& dataset, std::ostream& out);
void write_fundamentals_csv(const MarketDataset& dataset, std::ostream& out);

struct SyntheticMarketParams {
  std::uint64_t seed = 0;
  std::size_t tickers = 30;
  std::size_t days = 500;
  double drift = 0.0;
  double volatility = 0.01;
  Date start = Date(std::chrono::sys_days{std::chrono::year{2015} /
                                          std::chrono::January / 2});
};

inline constexpr std::size_t kRatioRedrawPeriod = 63;

/// Geometric random walk from 100 per ticker on consecutive weekdays;
/// ratios are piecewise constant and re-drawn every kRatioRedrawPeriod days.
MarketDataset generate_synthetic_market(const SyntheticMarketParams& params);

/// Per-day turbulence index; absent until the lookback window has filled.
struct TurbulenceSeries {
  std::vector<std::optional<double>> values;
};

inline constexpr std::size_t kDefaultTurbulenceLookback = 252;
inline constexpr double kTurbulenceRidge = 1e-6;

/// Squared Mahalanobis distance of each day's return vector from the mean of
/// the previous `lookback` return vectors, under their ridge-regularized
/// sample covariance. Day t is defined once returns for days t-lookback..t-1
/// exist, i.e. for t >= lookback + 1.
TurbulenceSeries compute_turbulence(
    const MarketDataset& dataset,
    std::size_t lookback = kDefaultTurbulenceLookback);

/// d^T * inverse(covariance) * d for a row-major n x n SPD covariance.
double mahalanobis_squared(std::span<const double> deviation,
                           std::span<const double> covariance);

/// train = days < boundary, test = days >= boundary.
std::pair<MarketDataset, MarketDataset> split_by_date(
    const MarketDataset& dataset, Date boundary);

}  // namespace shufflerl
