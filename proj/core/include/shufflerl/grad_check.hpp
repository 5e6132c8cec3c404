#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "shufflerl/network.hpp"

namespace shufflerl {

/// Central finite-difference check against analytic gradients.
struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

struct GradCheckOptions {
  double step = 1e-4;
  /// Denominator floor so near-zero gradients are compared absolutely.
  double floor = 1e-6;
  /// Check at most this many entries per parameter (evenly strided); 0 = all.
  std::size_t max_entries_per_param = 0;
};

/// `loss` re-evaluates the scalar objective at the current parameter values;
/// `compute_grads` must fill every `grad` span for the current values.
/// Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(std::span<const ParamRef> params,
                           const std::function<double()>& loss,
                           const std::function<void()>& compute_grads,
                           const GradCheckOptions& options = {});

}  // namespace shufflerl
