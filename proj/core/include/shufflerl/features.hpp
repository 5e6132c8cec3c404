#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "shufflerl/market_data.hpp"

namespace shufflerl {

/// Index map of the daily state vector [balance, prices, holdings, ratios].
///
/// Canonical order: index 0 is the scaled balance, 1..D the prices, D+1..2D
/// the share holdings, then the ratio block in ratio-major order (ratio j of
/// ticker i at 1 + 2D + j*D + i).
class FeatureLayout {
 public:
  static constexpr std::size_t kPerTicker = 2 + kRatioCount;

  explicit FeatureLayout(std::size_t ticker_count);

  std::size_t ticker_count() const { return tickers_; }
  static constexpr std::size_t ratio_count() { return kRatioCount; }
  std::size_t total() const { return 1 + kPerTicker * tickers_; }

  static constexpr std::size_t balance_index() { return 0; }
  std::size_t price_index(std::size_t ticker) const { return 1 + ticker; }
  std::size_t holding_index(std::size_t ticker) const { return 1 + tickers_ + ticker; }
  std::size_t ratio_index(std::size_t ratio, std::size_t ticker) const {
    return 1 + 2 * tickers_ + ratio * tickers_ + ticker;
  }

  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;

 private:
  std::size_t tickers_;
};

enum class LayoutTag { canonical, shuffled };

std::string_view to_string(LayoutTag tag);
LayoutTag layout_tag_from_string(std::string_view name);

struct FeatureVector {
  std::vector<double> values;
  LayoutTag tag = LayoutTag::canonical;
};

FeatureVector build_feature_vector(const FeatureLayout& layout, double balance,
                                   std::span<const double> prices,
                                   std::span<const std::int64_t> holdings,
                                   std::span<const Ratios> ratios, double scale);

/// Gather permutation: applying it yields out[k] = in[perm[k]].
class PermutationSpec {
 public:
  /// Throws ConfigError unless `perm` is a bijection on 0..size-1.
  explicit PermutationSpec(std::vector<std::size_t> perm);

  static PermutationSpec identity(std::size_t size);

  std::size_t size() const { return perm_.size(); }
  std::size_t operator[](std::size_t k) const { return perm_[k]; }
  const std::vector<std::size_t>& indices() const { return perm_; }

  friend bool operator==(const PermutationSpec&, const PermutationSpec&) = default;

 private:
  std::vector<std::size_t> perm_;
};

/// Ticker-major order: [balance] then, for each ticker i,
/// [price_i, shares_i, ratio_0_i, ..., ratio_14_i].
PermutationSpec ticker_block_permutation(const FeatureLayout& layout);

PermutationSpec invert_permutation(const PermutationSpec& p);

/// The single permutation equivalent to applying `first` then `second`.
PermutationSpec compose(const PermutationSpec& first, const PermutationSpec& second);

/// Gathers values through `p`. A canonical input comes out tagged shuffled
/// and a shuffled input (e.g. under the inverse) comes out canonical.
FeatureVector apply_permutation(const FeatureVector& v, const PermutationSpec& p);

void to_json(nlohmann::json& j, const PermutationSpec& p);
void from_json(const nlohmann::json& j, PermutationSpec& p);

/// Sliding window of daily feature vectors; row 0 is the oldest day.
///
/// Storage is a ring of rows so a slide copies one row.
class WindowMatrix {
 public:
  /// Throws ShapeError on a wrong count or mixed layouts/widths.
  static WindowMatrix init_window(std::span<const FeatureVector> vectors,
                                  std::size_t window_length);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  LayoutTag tag() const { return tag_; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + ((head_ + r) % rows_) * cols_, cols_};
  }
  std::span<const double> newest() const { return row(rows_ - 1); }

  /// Drops the oldest row and appends `v` as the newest.
  void slide(const FeatureVector& v);

  /// Writes rows oldest-first into `out` (rows * cols values).
  void copy_to(std::span<double> out) const;

  void write_csv(std::ostream& out) const;

  friend bool operator==(const WindowMatrix& a, const WindowMatrix& b);

 private:
  WindowMatrix(std::size_t rows, std::size_t cols, LayoutTag tag);

  std::size_t rows_;
  std::size_t cols_;
  LayoutTag tag_;
  std::size_t head_ = 0;
  std::vector<double> data_;
};

WindowMatrix slide_window(WindowMatrix w, const FeatureVector& newest);

}  // namespace shufflerl
