#include "shufflerl/tensor.hpp"

#include <cmath>

#include <fmt/format.h>

#include "shufflerl/errors.hpp"

namespace shufflerl {

std::string Shape4::to_string() const { return fmt::format("({}, {}, {}, {})", n, c, h, w); }

Array4::Array4(Shape4 shape, std::vector<double> values)
    : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.size())
    throw ShapeError(fmt::format("{} values for shape {}", data_.size(), shape_.to_string()));
}

Array4 Array4::reshaped(Shape4 shape) const& { return Array4(shape, data_); }

Array4 Array4::reshaped(Shape4 shape) && { return Array4(shape, std::move(data_)); }

void check_finite(std::span<const double> values, std::string_view layer) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k]))
      throw NumericError(fmt::format("non-finite value {} at index {} in layer '{}'",
                                     values[k], k, layer));
  }
}

void check_finite(const Array4& a, std::string_view layer) {
  check_finite(a.values(), layer);
}

}  // namespace shufflerl
