#pragma once

// Ordinary least squares with classical t inference.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "slab/error.hpp"

namespace slab::lmm {

/// Two-sided p value of a t statistic with `df` degrees of freedom.
inline double t_pvalue(double t, double df) {
  if (!(df > 0.0)) throw ValidationError(fmt::format("t test needs positive df, got {}", df));
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

struct OlsFit {
  std::vector<std::string> names;
  Eigen::VectorXd estimate;
  Eigen::VectorXd se;
  Eigen::VectorXd t;
  Eigen::VectorXd p;
  Eigen::VectorXd residuals;
  double sigma2 = 0.0;
  std::size_t df = 0;
  bool perfect_fit = false;  ///< residuals vanish; SEs are zero
};

inline OlsFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      std::vector<std::string> names = {}) {
  const auto n = X.rows(), p = X.cols();
  if (y.size() != n) throw ShapeError(fmt::format("X has {} rows but y has {}", n, y.size()));
  if (n <= p) throw ValidationError(fmt::format("OLS needs more rows ({}) than columns ({})", n, p));
  if (names.empty())
    for (Eigen::Index j = 0; j < p; ++j) names.push_back(fmt::format("x{}", j));
  if (static_cast<Eigen::Index>(names.size()) != p)
    throw ShapeError(fmt::format("{} names for {} columns", names.size(), p));

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) throw NumericError(fmt::format("design is rank deficient (rank {} < {})", qr.rank(), p));

  OlsFit fit;
  fit.names = std::move(names);
  fit.estimate = qr.solve(y);
  fit.residuals = y - X * fit.estimate;
  fit.df = static_cast<std::size_t>(n - p);
  const double rss = fit.residuals.squaredNorm();
  fit.sigma2 = rss / static_cast<double>(fit.df);
  // (XᵀX)⁻¹ = P R⁻¹ R⁻ᵀ Pᵀ
  const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd unscaled = qr.colsPermutation() * (Rinv * Rinv.transpose()) *
                                   qr.colsPermutation().transpose();
  fit.perfect_fit = rss <= 1e-24 * std::max(1.0, y.squaredNorm());
  fit.se.resize(p);
  fit.t.resize(p);
  fit.p.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (fit.perfect_fit) {
      fit.se(j) = 0.0;
      fit.t(j) = fit.estimate(j) == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), fit.estimate(j));
    } else {
      fit.se(j) = std::sqrt(fit.sigma2 * unscaled(j, j));
      fit.t(j) = fit.estimate(j) / fit.se(j);
    }
    fit.p(j) = t_pvalue(fit.t(j), static_cast<double>(fit.df));
  }
  return fit;
}

}  // namespace slab::lmm
