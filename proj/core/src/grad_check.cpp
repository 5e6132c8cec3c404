#include "shufflerl/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace shufflerl {

GradCheckResult grad_check(std::span<const ParamRef> params,
                           const std::function<double()>& loss,
                           const std::function<void()>& compute_grads,
                           const GradCheckOptions& options) {
  for (const auto& p : params)
    if (p.trainable) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  compute_grads();
  // Snapshot before finite differencing re-runs the forward pass.
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.emplace_back(p.grad.begin(), p.grad.end());

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& p = params[pi];
    if (!p.trainable) continue;
    const auto n = p.value.size();
    std::size_t stride = 1;
    if (options.max_entries_per_param > 0 && n > options.max_entries_per_param)
      stride = (n + options.max_entries_per_param - 1) / options.max_entries_per_param;
    for (std::size_t k = 0; k < n; k += stride) {
      const double saved = p.value[k];
      p.value[k] = saved + options.step;
      const double up = loss();
      p.value[k] = saved - options.step;
      const double down = loss();
      p.value[k] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[pi][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double err = std::abs(a - numeric) / denom;
      ++result.checked;
      if (err > result.max_relative_error || result.worst_parameter.empty()) {
        if (err >= result.max_relative_error) {
          result.max_relative_error = err;
          result.worst_parameter = p.name;
          result.worst_index = k;
          result.analytic = a;
          result.numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace shufflerl
