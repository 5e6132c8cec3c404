#include "shufflerl/features.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "csv_util.hpp"
#include "shufflerl/errors.hpp"

namespace shufflerl {

FeatureLayout::FeatureLayout(std::size_t ticker_count) : tickers_(ticker_count) {
  if (ticker_count == 0) throw ConfigError("feature layout needs >= 1 ticker");
}

std::string_view to_string(LayoutTag tag) {
  return tag == LayoutTag::canonical ? "canonical" : "shuffled";
}

LayoutTag layout_tag_from_string(std::string_view name) {
  if (name == "canonical") return LayoutTag::canonical;
  if (name == "shuffled") return LayoutTag::shuffled;
  throw ConfigError(fmt::format("unknown layout '{}' (canonical|shuffled)", name));
}

FeatureVector build_feature_vector(const FeatureLayout& layout, double balance,
                                   std::span<const double> prices,
                                   std::span<const std::int64_t> holdings,
                                   std::span<const Ratios> ratios, double scale) {
  const auto d = layout.ticker_count();
  if (prices.size() != d || holdings.size() != d || ratios.size() != d)
    throw ShapeError(fmt::format(
        "feature inputs have {} prices, {} holdings, {} ratio rows; layout has {} tickers",
        prices.size(), holdings.size(), ratios.size(), d));
  if (!std::isfinite(balance) || !std::isfinite(scale) || scale <= 0.0)
    throw NumericError("balance and scale must be finite, scale positive");

  FeatureVector v{std::vector<double>(layout.total()), LayoutTag::canonical};
  v.values[FeatureLayout::balance_index()] = balance * scale;
  for (std::size_t i = 0; i < d; ++i) {
    if (!std::isfinite(prices[i]) || prices[i] <= 0.0)
      throw NumericError(fmt::format("price of ticker {} is not positive", i));
    v.values[layout.price_index(i)] = prices[i];
    v.values[layout.holding_index(i)] = static_cast<double>(holdings[i]);
    for (std::size_t j = 0; j < kRatioCount; ++j) {
      if (!std::isfinite(ratios[i][j]))
        throw NumericError(fmt::format("ratio {} of ticker {} is not finite", j, i));
      v.values[layout.ratio_index(j, i)] = ratios[i][j];
    }
  }
  return v;
}

PermutationSpec::PermutationSpec(std::vector<std::size_t> perm) : perm_(std::move(perm)) {
  std::vector<bool> seen(perm_.size(), false);
  for (std::size_t k = 0; k < perm_.size(); ++k) {
    const auto p = perm_[k];
    if (p >= perm_.size())
      throw ConfigError(fmt::format("permutation entry {} = {} out of range", k, p));
    if (seen[p]) throw ConfigError(fmt::format("permutation repeats index {}", p));
    seen[p] = true;
  }
}

PermutationSpec PermutationSpec::identity(std::size_t size) {
  std::vector<std::size_t> perm(size);
  for (std::size_t k = 0; k < size; ++k) perm[k] = k;
  return PermutationSpec(std::move(perm));
}

PermutationSpec ticker_block_permutation(const FeatureLayout& layout) {
  std::vector<std::size_t> perm;
  perm.reserve(layout.total());
  perm.push_back(FeatureLayout::balance_index());
  for (std::size_t i = 0; i < layout.ticker_count(); ++i) {
    perm.push_back(layout.price_index(i));
    perm.push_back(layout.holding_index(i));
    for (std::size_t j = 0; j < kRatioCount; ++j) perm.push_back(layout.ratio_index(j, i));
  }
  return PermutationSpec(std::move(perm));
}

PermutationSpec invert_permutation(const PermutationSpec& p) {
  std::vector<std::size_t> inverse(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) inverse[p[k]] = k;
  return PermutationSpec(std::move(inverse));
}

PermutationSpec compose(const PermutationSpec& first, const PermutationSpec& second) {
  if (first.size() != second.size())
    throw ShapeError(fmt::format("cannot compose permutations of size {} and {}",
                                 first.size(), second.size()));
  std::vector<std::size_t> perm(first.size());
  for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = first[second[k]];
  return PermutationSpec(std::move(perm));
}

FeatureVector apply_permutation(const FeatureVector& v, const PermutationSpec& p) {
  if (v.values.size() != p.size())
    throw ShapeError(fmt::format("vector of length {} vs permutation of size {}",
                                 v.values.size(), p.size()));
  FeatureVector out{std::vector<double>(p.size()),
                    v.tag == LayoutTag::canonical ? LayoutTag::shuffled
                                                  : LayoutTag::canonical};
  for (std::size_t k = 0; k < p.size(); ++k) out.values[k] = v.values[p[k]];
  return out;
}

void to_json(nlohmann::json& j, const PermutationSpec& p) { j = p.indices(); }

void from_json(const nlohmann::json& j, PermutationSpec& p) {
  if (!j.is_array()) throw ConfigError("permutation must be a JSON integer array");
  std::vector<std::size_t> perm;
  perm.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_number_unsigned())
      throw ConfigError("permutation entries must be non-negative integers");
    perm.push_back(e.get<std::size_t>());
  }
  p = PermutationSpec(std::move(perm));
}

WindowMatrix::WindowMatrix(std::size_t rows, std::size_t cols, LayoutTag tag)
    : rows_(rows), cols_(cols), tag_(tag), data_(rows * cols) {}

WindowMatrix WindowMatrix::init_window(std::span<const FeatureVector> vectors,
                                       std::size_t window_length) {
  if (window_length == 0) throw ShapeError("window length must be >= 1");
  if (vectors.size() != window_length)
    throw ShapeError(fmt::format("window needs {} vectors, got {}", window_length,
                                 vectors.size()));
  const auto cols = vectors.front().values.size();
  const auto tag = vectors.front().tag;
  WindowMatrix w(window_length, cols, tag);
  for (std::size_t r = 0; r < window_length; ++r) {
    const auto& v = vectors[r];
    if (v.values.size() != cols || v.tag != tag)
      throw ShapeError(fmt::format("window row {} has width {} and layout {}; expected {} and {}",
                                   r, v.values.size(), to_string(v.tag), cols,
                                   to_string(tag)));
    std::copy(v.values.begin(), v.values.end(), w.data_.begin() + r * cols);
  }
  return w;
}

void WindowMatrix::slide(const FeatureVector& v) {
  if (v.values.size() != cols_ || v.tag != tag_)
    throw ShapeError(fmt::format("cannot slide a {} vector of width {} into a {} window of width {}",
                                 to_string(v.tag), v.values.size(), to_string(tag_),
                                 cols_));
  std::copy(v.values.begin(), v.values.end(), data_.begin() + head_ * cols_);
  head_ = (head_ + 1) % rows_;
}

void WindowMatrix::copy_to(std::span<double> out) const {
  if (out.size() != rows_ * cols_)
    throw ShapeError(fmt::format("window copy target has {} values, need {}",
                                 out.size(), rows_ * cols_));
  for (std::size_t r = 0; r < rows_; ++r) {
    const auto src = row(r);
    std::copy(src.begin(), src.end(), out.begin() + r * cols_);
  }
}

void WindowMatrix::write_csv(std::ostream& out) const {
  out << "row";
  for (std::size_t c = 0; c < cols_; ++c) out << ",f" << c;
  out << '\n';
  for (std::size_t r = 0; r < rows_; ++r) {
    out << r;
    for (double v : row(r)) out << ',' << detail::format_double(v);
    out << '\n';
  }
}

bool operator==(const WindowMatrix& a, const WindowMatrix& b) {
  if (a.rows_ != b.rows_ || a.cols_ != b.cols_ || a.tag_ != b.tag_) return false;
  for (std::size_t r = 0; r < a.rows_; ++r) {
    const auto ra = a.row(r);
    const auto rb = b.row(r);
    if (!std::equal(ra.begin(), ra.end(), rb.begin())) return false;
  }
  return true;
}

WindowMatrix slide_window(WindowMatrix w, const FeatureVector& newest) {
  w.slide(newest);
  return w;
}

}  // namespace shufflerl
