#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

double ledger_value(const Ledger& ledger, const std::vector<double>& prices) {
  double v = ledger.balance;
  for (std::size_t i = 0; i < prices.size(); ++i)
    v += prices[i] * static_cast<double>(ledger.shares[i]);
  return v;
}

double ledger_step(Ledger& ledger, const std::vector<std::int64_t>& deltas,
                   const std::vector<double>& today, const std::vector<double>& tomorrow,
                   double cost_rate, double reward_scale) {
  const double before = ledger_value(ledger, today);
  double step_costs = 0.0;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (deltas[i] >= 0) continue;
    std::int64_t q = -deltas[i];
    if (q > ledger.shares[i]) q = ledger.shares[i];
    const double gross = static_cast<double>(q) * today[i];
    ledger.balance += gross - gross * cost_rate;
    step_costs += gross * cost_rate;
    ledger.shares[i] -= q;
  }
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (deltas[i] <= 0) continue;
    for (std::int64_t q = deltas[i]; q > 0; --q) {
      const double gross = static_cast<double>(q) * today[i];
      if (gross + gross * cost_rate <= ledger.balance) {
        ledger.balance -= gross + gross * cost_rate;
        step_costs += gross * cost_rate;
        ledger.shares[i] += q;
        break;
      }
    }
  }
  ledger.costs += step_costs;
  return (ledger_value(ledger, tomorrow) - before) * reward_scale;
}

std::int64_t action_to_shares(double a, std::int64_t hmax) {
  if (a > 1.0) a = 1.0;
  if (a < -1.0) a = -1.0;
  const double x = a * static_cast<double>(hmax);
  const auto mag = static_cast<std::int64_t>(std::floor(std::fabs(x)));
  return x < 0 ? -mag : mag;
}

double buy_and_hold_reward(const std::vector<double>& closes, std::size_t first,
                           double balance, std::int64_t hmax, double cost_rate,
                           double reward_scale) {
  Ledger ledger{balance, {0}, 0.0};
  double total = 0.0;
  for (std::size_t t = first; t + 1 < closes.size(); ++t)
    total += ledger_step(ledger, {hmax}, {closes[t]}, {closes[t + 1]}, cost_rate,
                         reward_scale);
  return total;
}

std::vector<double> numeric_gradient(const std::function<double()>& f,
                                     std::span<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + h;
    const double up = f();
    x[k] = saved - h;
    const double down = f();
    x[k] = saved;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(double a, double b, double floor) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

double discounted_sum(const std::vector<double>& rewards, double gamma) {
  double total = 0.0;
  double w = 1.0;
  for (double r : rewards) {
    total += w * r;
    w *= gamma;
  }
  return total;
}

std::int64_t Gen::integer(std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(rng_() % span);
}

double Gen::real(double lo, double hi) {
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

std::vector<double> Gen::reals(std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = real(lo, hi);
  return v;
}

std::vector<std::size_t> Gen::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i)
    std::swap(p[i - 1], p[static_cast<std::size_t>(integer(0, static_cast<std::int64_t>(i) - 1))]);
  return p;
}

}  // namespace oracle
