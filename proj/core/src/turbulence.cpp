#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <fmt/format.h>

#include "shufflerl/errors.hpp"
#include "shufflerl/market_data.hpp"

namespace shufflerl {

double mahalanobis_squared(std::span<const double> deviation,
                           std::span<const double> covariance) {
  const auto n = static_cast<Eigen::Index>(deviation.size());
  if (covariance.size() != deviation.size() * deviation.size())
    throw ShapeError(fmt::format("covariance has {} entries for a {}-vector",
                                 covariance.size(), deviation.size()));
  const Eigen::Map<const Eigen::VectorXd> d(deviation.data(), n);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                       Eigen::RowMajor>>
      cov(covariance.data(), n, n);
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw NumericError("covariance is not positive definite");
  return std::max(0.0, d.dot(llt.solve(d)));
}

TurbulenceSeries compute_turbulence(const MarketDataset& dataset,
                                    std::size_t lookback) {
  const auto d = dataset.ticker_count();
  if (lookback < d + 2)
    throw ConfigError(fmt::format("turbulence lookback {} must be >= tickers + 2 = {}",
                                  lookback, d + 2));
  const auto days = dataset.day_count();
  if (days < lookback + 2)
    throw DataError(fmt::format("turbulence needs {} days of history, dataset has {}",
                                lookback + 2, days));

  // returns(t, i) for t >= 1; row 0 unused.
  Eigen::MatrixXd returns = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(days),
                                                  static_cast<Eigen::Index>(d));
  for (std::size_t t = 1; t < days; ++t)
    for (std::size_t i = 0; i < d; ++i)
      returns(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) =
          dataset.close(t, i) / dataset.close(t - 1, i) - 1.0;

  TurbulenceSeries series;
  series.values.assign(days, std::nullopt);
  const auto n = static_cast<Eigen::Index>(lookback);
  const auto dim = static_cast<Eigen::Index>(d);
  for (std::size_t t = lookback + 1; t < days; ++t) {
    const auto history =
        returns.middleRows(static_cast<Eigen::Index>(t - lookback), n);
    const Eigen::RowVectorXd mean = history.colwise().mean();
    const Eigen::MatrixXd centered = history.rowwise() - mean;
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    cov += kTurbulenceRidge * Eigen::MatrixXd::Identity(dim, dim);
    const Eigen::VectorXd dev =
        (returns.row(static_cast<Eigen::Index>(t)) - mean).transpose();
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    series.values[t] = std::max(0.0, dev.dot(llt.solve(dev)));
  }
  return series;
}

}  // namespace shufflerl
