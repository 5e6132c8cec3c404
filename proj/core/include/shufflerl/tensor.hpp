#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shufflerl {

/// (batch, channels, height, width)
struct Shape4 {
  std::size_t n = 0, c = 0, h = 0, w = 0;

  std::size_t size() const { return n * c * h * w; }
  /// Elements per batch item.
  std::size_t item_size() const { return c * h * w; }
  std::string to_string() const;

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

/// Dense row-major 4-d array of doubles.
class Array4 {
 public:
  Array4() = default;
  explicit Array4(Shape4 shape, double fill = 0.0)
      : shape_(shape), data_(shape.size(), fill) {}
  Array4(Shape4 shape, std::vector<double> values);

  const Shape4& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<const double> item(std::size_t n) const {
    return {data_.data() + n * shape_.item_size(), shape_.item_size()};
  }

  /// Same values under a new shape of equal size.
  Array4 reshaped(Shape4 shape) const&;
  Array4 reshaped(Shape4 shape) &&;

  friend bool operator==(const Array4&, const Array4&) = default;

 private:
  Shape4 shape_{};
  std::vector<double> data_;
};

/// Throws NumericError naming `layer` if any value is NaN or infinite.
void check_finite(const Array4& a, std::string_view layer);
void check_finite(std::span<const double> values, std::string_view layer);

}  // namespace shufflerl
