#include "shufflerl/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "csv_util.hpp"
#include "shufflerl/errors.hpp"

namespace shufflerl {

using detail::format_double;
using detail::parse_double;
using detail::split_fields;

std::optional<Date> Date::parse(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  auto number = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
    int v = 0;
    const auto* first = text.data() + pos;
    const auto [ptr, ec] = std::from_chars(first, first + len, v);
    if (ec != std::errc{} || ptr != first + len) return std::nullopt;
    return v;
  };
  const auto y = number(0, 4);
  const auto m = number(5, 2);
  const auto d = number(8, 2);
  if (!y || !m || !d || *m < 1 || *d < 1) return std::nullopt;
  const std::chrono::year_month_day ymd{
      std::chrono::year{*y}, std::chrono::month{static_cast<unsigned>(*m)},
      std::chrono::day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  return Date(std::chrono::sys_days{ymd});
}

Date Date::from_string(std::string_view text) {
  if (auto d = parse(text)) return *d;
  throw ConfigError(fmt::format("invalid date '{}' (expected YYYY-MM-DD)", text));
}

std::string Date::to_string() const {
  const std::chrono::year_month_day ymd{day_};
  return fmt::format("{:04}-{:02}-{:02}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()));
}

MarketDataset::MarketDataset(std::vector<std::string> tickers,
                             std::vector<Date> days, std::vector<double> closes,
                             std::vector<Ratios> ratios)
    : tickers_(std::move(tickers)),
      days_(std::move(days)),
      closes_(std::move(closes)),
      ratios_(std::move(ratios)) {
  if (tickers_.empty()) throw DataError("dataset needs at least one ticker");
  if (days_.empty()) throw DataError("dataset needs at least one day");
  std::unordered_set<std::string> seen;
  for (const auto& t : tickers_) {
    if (t.empty()) throw DataError("empty ticker symbol");
    if (!seen.insert(t).second)
      throw DataError(fmt::format("duplicate ticker '{}'", t));
  }
  for (std::size_t i = 1; i < days_.size(); ++i) {
    if (!(days_[i - 1] < days_[i]))
      throw DataError(fmt::format("dates not strictly increasing at {}",
                                  days_[i].to_string()));
  }
  const auto cells = tickers_.size() * days_.size();
  if (closes_.size() != cells || ratios_.size() != cells)
    throw DataError(fmt::format("grid has {} closes and {} ratio rows, expected {}",
                                closes_.size(), ratios_.size(), cells));
  for (std::size_t k = 0; k < cells; ++k) {
    if (!(closes_[k] > 0.0) || !std::isfinite(closes_[k]))
      throw DataError(fmt::format("non-positive close for {} on {}",
                                  tickers_[k % tickers_.size()],
                                  days_[k / tickers_.size()].to_string()));
    for (double r : ratios_[k]) {
      if (!std::isfinite(r))
        throw DataError(fmt::format("non-finite ratio for {} on {}",
                                    tickers_[k % tickers_.size()],
                                    days_[k / tickers_.size()].to_string()));
    }
  }
}

MarketDataset MarketDataset::slice(std::size_t first, std::size_t last) const {
  if (first >= last || last > days_.size())
    throw DataError(fmt::format("invalid day slice [{}, {}) of {}", first, last,
                                days_.size()));
  const auto d = tickers_.size();
  return MarketDataset(
      tickers_, {days_.begin() + first, days_.begin() + last},
      {closes_.begin() + first * d, closes_.begin() + last * d},
      {ratios_.begin() + first * d, ratios_.begin() + last * d});
}

namespace {

std::ifstream open_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("{}: cannot open file", path.string()));
  return in;
}

std::string read_header(std::ifstream& in, const std::filesystem::path& path) {
  std::string header;
  if (!std::getline(in, header)) throw ParseError(path, 1, "missing header row");
  if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0)
    header.erase(0, 3);
  return header;
}

Date parse_date_cell(std::string_view cell, const std::filesystem::path& path,
                     std::size_t line) {
  const auto d = Date::parse(cell);
  if (!d) throw ParseError(path, line, fmt::format("invalid date '{}'", cell));
  return *d;
}

std::string parse_ticker_cell(std::string_view cell,
                              const std::filesystem::path& path,
                              std::size_t line) {
  if (cell.empty()) throw ParseError(path, line, "empty ticker");
  return std::string(cell);
}

}  // namespace

PriceTable load_prices(const std::filesystem::path& path) {
  auto in = open_csv(path);
  const auto header = read_header(in, path);
  const auto columns = split_fields(header);
  if (columns.size() != 3 || columns[0] != "date" || columns[1] != "ticker" ||
      columns[2] != "close")
    throw ParseError(path, 1,
                     fmt::format("expected header 'date,ticker,close', got '{}'",
                                 detail::trim(header)));

  PriceTable table{path, {}};
  std::map<std::pair<Date, std::string>, std::size_t> seen;
  std::string raw;
  std::size_t line = 1;
  while (std::getline(in, raw)) {
    ++line;
    if (detail::trim(raw).empty()) continue;
    const auto fields = split_fields(raw);
    if (fields.size() != 3)
      throw ParseError(path, line,
                       fmt::format("expected 3 fields, got {}", fields.size()));
    PriceRow row;
    row.line = line;
    row.date = parse_date_cell(fields[0], path, line);
    row.ticker = parse_ticker_cell(fields[1], path, line);
    const auto close = parse_double(fields[2]);
    if (!close)
      throw ParseError(path, line, fmt::format("non-numeric close '{}'", fields[2]));
    if (!std::isfinite(*close) || *close <= 0.0)
      throw ParseError(path, line,
                       fmt::format("close must be positive, got {}", fields[2]));
    row.close = *close;
    const auto [it, inserted] = seen.emplace(std::pair{row.date, row.ticker}, line);
    if (!inserted)
      throw ParseError(path, line,
                       fmt::format("duplicate (date, ticker) ({}, {}); first seen on line {}",
                                   row.date.to_string(), row.ticker, it->second));
    table.rows.push_back(std::move(row));
  }
  return table;
}

FundamentalTable load_fundamentals(const std::filesystem::path& path) {
  auto in = open_csv(path);
  const auto header = read_header(in, path);
  const auto columns = split_fields(header);
  if (columns.size() != 2 + kRatioCount)
    throw ParseError(path, 1,
                     fmt::format("expected date, ticker and {} ratio columns, got {} columns",
                                 kRatioCount, columns.size()));
  if (columns[0] != "date" || columns[1] != "ticker")
    throw ParseError(path, 1, "header must start with 'date,ticker'");
  for (std::size_t j = 0; j < kRatioCount; ++j) {
    if (columns[2 + j] != kRatioNames[j])
      throw ParseError(path, 1,
                       fmt::format("column {} should be '{}', got '{}'", 3 + j,
                                   kRatioNames[j], columns[2 + j]));
  }

  FundamentalTable table{path, {}};
  std::map<std::pair<Date, std::string>, std::size_t> seen;
  std::string raw;
  std::size_t line = 1;
  while (std::getline(in, raw)) {
    ++line;
    if (detail::trim(raw).empty()) continue;
    const auto fields = split_fields(raw);
    if (fields.size() != columns.size())
      throw ParseError(path, line,
                       fmt::format("expected {} fields, got {}", columns.size(),
                                   fields.size()));
    FundamentalRow row;
    row.line = line;
    row.date = parse_date_cell(fields[0], path, line);
    row.ticker = parse_ticker_cell(fields[1], path, line);
    for (std::size_t j = 0; j < kRatioCount; ++j) {
      const auto v = parse_double(fields[2 + j]);
      if (!v || !std::isfinite(*v))
        throw ParseError(path, line,
                         fmt::format("cell {} = '{}' is not a finite number",
                                     kRatioNames[j], fields[2 + j]));
      row.ratios[j] = *v;
    }
    const auto [it, inserted] = seen.emplace(std::pair{row.date, row.ticker}, line);
    if (!inserted)
      throw ParseError(path, line,
                       fmt::format("duplicate (date, ticker) ({}, {}); first seen on line {}",
                                   row.date.to_string(), row.ticker, it->second));
    table.rows.push_back(std::move(row));
  }
  return table;
}

MarketDataset align_forward_fill(const PriceTable& prices,
                                 const FundamentalTable& fundamentals) {
  if (prices.rows.empty())
    throw DataError(fmt::format("{}: no price rows", prices.source.string()));

  // Ticker order is first appearance in the price file.
  std::vector<std::string> tickers;
  std::unordered_map<std::string, std::size_t> ticker_index;
  for (const auto& row : prices.rows) {
    if (ticker_index.emplace(row.ticker, tickers.size()).second)
      tickers.push_back(row.ticker);
  }
  const auto d = tickers.size();

  std::set<Date> day_set;
  for (const auto& row : prices.rows) day_set.insert(row.date);
  const std::vector<Date> all_days(day_set.begin(), day_set.end());
  std::unordered_map<std::int64_t, std::size_t> day_index;
  for (std::size_t t = 0; t < all_days.size(); ++t)
    day_index.emplace(all_days[t].sys_days().time_since_epoch().count(), t);

  std::vector<double> closes(all_days.size() * d, 0.0);
  for (const auto& row : prices.rows) {
    const auto t = day_index.at(row.date.sys_days().time_since_epoch().count());
    closes[t * d + ticker_index.at(row.ticker)] = row.close;
  }

  // Per-ticker observations sorted by date.
  std::vector<std::vector<const FundamentalRow*>> observations(d);
  for (const auto& row : fundamentals.rows) {
    const auto it = ticker_index.find(row.ticker);
    if (it != ticker_index.end()) observations[it->second].push_back(&row);
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (observations[i].empty())
      throw DataError(fmt::format("{}: ticker '{}' has prices but no fundamentals",
                                  fundamentals.source.string(), tickers[i]));
    std::sort(observations[i].begin(), observations[i].end(),
              [](const auto* a, const auto* b) { return a->date < b->date; });
  }

  Date first_covered = observations[0].front()->date;
  for (const auto& obs : observations)
    first_covered = std::max(first_covered, obs.front()->date);
  const auto first_it =
      std::lower_bound(all_days.begin(), all_days.end(), first_covered);
  if (first_it == all_days.end())
    throw DataError(fmt::format(
        "no price day on or after {}, the first date every ticker has fundamentals",
        first_covered.to_string()));
  const auto first = static_cast<std::size_t>(first_it - all_days.begin());

  std::vector<Date> days(all_days.begin() + first, all_days.end());
  std::vector<double> grid_closes;
  std::vector<Ratios> grid_ratios;
  grid_closes.reserve(days.size() * d);
  grid_ratios.reserve(days.size() * d);
  std::vector<std::size_t> cursor(d, 0);
  for (std::size_t t = first; t < all_days.size(); ++t) {
    for (std::size_t i = 0; i < d; ++i) {
      const double close = closes[t * d + i];
      if (close == 0.0)
        throw DataError(fmt::format("{}: no close for '{}' on {}",
                                    prices.source.string(), tickers[i],
                                    all_days[t].to_string()));
      const auto& obs = observations[i];
      while (cursor[i] + 1 < obs.size() && !(all_days[t] < obs[cursor[i] + 1]->date))
        ++cursor[i];
      grid_closes.push_back(close);
      grid_ratios.push_back(obs[cursor[i]]->ratios);
    }
  }
  return MarketDataset(std::move(tickers), std::move(days), std::move(grid_closes),
                       std::move(grid_ratios));
}

PriceTable to_price_table(const MarketDataset& dataset) {
  PriceTable table;
  std::size_t line = 1;
  for (std::size_t t = 0; t < dataset.day_count(); ++t)
    for (std::size_t i = 0; i < dataset.ticker_count(); ++i)
      table.rows.push_back({dataset.days()[t], dataset.tickers()[i],
                            dataset.close(t, i), ++line});
  return table;
}

FundamentalTable to_fundamental_table(const MarketDataset& dataset) {
  FundamentalTable table;
  std::size_t line = 1;
  for (std::size_t t = 0; t < dataset.day_count(); ++t)
    for (std::size_t i = 0; i < dataset.ticker_count(); ++i)
      table.rows.push_back({dataset.days()[t], dataset.tickers()[i],
                            dataset.ratios(t, i), ++line});
  return table;
}

void write_prices_csv(const MarketDataset& dataset, std::ostream& out) {
  out << "date,ticker,close\n";
  for (std::size_t t = 0; t < dataset.day_count(); ++t) {
    const auto date = dataset.days()[t].to_string();
    for (std::size_t i = 0; i < dataset.ticker_count(); ++i)
      out << date << ',' << dataset.tickers()[i] << ','
          << format_double(dataset.close(t, i)) << '\n';
  }
}

void write_fundamentals_csv(const MarketDataset& dataset, std::ostream& out) {
  out << "date,ticker";
  for (auto name : kRatioNames) out << ',' << name;
  out << '\n';
  for (std::size_t t = 0; t < dataset.day_count(); ++t) {
    const auto date = dataset.days()[t].to_string();
    for (std::size_t i = 0; i < dataset.ticker_count(); ++i) {
      out << date << ',' << dataset.tickers()[i];
      for (double r : dataset.ratios(t, i)) out << ',' << format_double(r);
      out << '\n';
    }
  }
}

namespace {

// Plausible ranges for the synthetic ratio draws, in kRatioNames order.
constexpr std::array<std::pair<double, double>, kRatioCount> kSyntheticRatioRanges =
    {{{0.8, 2.5},
      {0.1, 1.0},
      {0.5, 2.0},
      {0.2, 0.8},
      {0.3, 3.0},
      {2.0, 15.0},
      {4.0, 12.0},
      {3.0, 10.0},
      {0.05, 0.35},
      {-0.05, 0.25},
      {-0.02, 0.15},
      {-0.05, 0.40},
      {1.0, 15.0},
      {10.0, 80.0},
      {0.0, 5.0}}};

bool is_weekend(Date d) {
  const std::chrono::weekday wd{d.sys_days()};
  return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

}  // namespace

MarketDataset generate_synthetic_market(const SyntheticMarketParams& params) {
  if (params.tickers < 1) throw ConfigError("synthetic market needs >= 1 ticker");
  if (params.days < 1) throw ConfigError("synthetic market needs >= 1 day");
  if (!(params.volatility >= 0.0) || !std::isfinite(params.volatility))
    throw ConfigError("synthetic volatility must be >= 0");
  if (!std::isfinite(params.drift) || params.drift <= -1.0)
    throw ConfigError("synthetic drift must be finite and > -1");

  const auto d = params.tickers;
  std::vector<std::string> tickers;
  for (std::size_t i = 0; i < d; ++i) tickers.push_back(fmt::format("SYN{:02}", i));

  std::vector<Date> days;
  Date day = params.start;
  while (days.size() < params.days) {
    if (!is_weekend(day)) days.push_back(day);
    day = day.next_day();
  }

  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> closes(params.days * d);
  std::vector<Ratios> ratios(params.days * d);
  std::vector<double> price(d, 100.0);
  std::vector<Ratios> current(d);
  const double vol = params.volatility;
  for (std::size_t t = 0; t < params.days; ++t) {
    if (t % kRatioRedrawPeriod == 0) {
      for (auto& r : current)
        for (std::size_t j = 0; j < kRatioCount; ++j) {
          const auto [lo, hi] = kSyntheticRatioRanges[j];
          r[j] = lo + (hi - lo) * unit(rng);
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
      const double z = normal(rng);
      if (t > 0) price[i] *= (1.0 + params.drift) * std::exp(vol * z - 0.5 * vol * vol);
      closes[t * d + i] = price[i];
      ratios[t * d + i] = current[i];
    }
  }
  return MarketDataset(std::move(tickers), std::move(days), std::move(closes),
                       std::move(ratios));
}

std::pair<MarketDataset, MarketDataset> split_by_date(const MarketDataset& dataset,
                                                      Date boundary) {
  const auto& days = dataset.days();
  if (!(days.front() < boundary) || days.back() < boundary)
    throw DataError(fmt::format("split boundary {} must lie inside ({}, {}]",
                                boundary.to_string(), days.front().to_string(),
                                days.back().to_string()));
  const auto cut = static_cast<std::size_t>(
      std::lower_bound(days.begin(), days.end(), boundary) - days.begin());
  return {dataset.slice(0, cut), dataset.slice(cut, days.size())};
}

}  // namespace shufflerl
