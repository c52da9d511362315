#pragma once

// Linear mixed-model fitting by minimizing the profiled deviance over theta.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "slab/lmm/deviance.hpp"
#include "slab/lmm/optimize.hpp"

namespace slab::lmm {

inline constexpr double kSingularTolerance = 1e-4;

struct FitOptions {
  Criterion criterion = Criterion::reml;
  std::uint64_t seed = 0;
  int restarts = 3;  ///< random starts in addition to the identity start
  double ftol = 1e-8;
  bool polish = true;
  std::optional<std::vector<double>> fixed_theta;  ///< evaluate at theta instead of optimizing
};

struct VarianceComponent {
  std::string group;
  std::string first;
  std::string second;  ///< equal to `first` for a variance
  double value = 0.0;
};

struct LmmFit {
  Criterion criterion = Criterion::reml;
  std::vector<std::string> fixed_names;
  Eigen::VectorXd beta;
  Eigen::VectorXd beta_se;
  std::vector<double> theta;
  double sigma2 = 0.0;
  double deviance = 0.0;
  double loglik = 0.0;
  double aic = 0.0;
  bool converged = false;
  bool singular = false;
  std::size_t n = 0, p = 0, k = 0;
  std::size_t evaluations = 0;
  std::vector<VarianceComponent> variance;
  std::vector<std::string> warnings;

  double coefficient(const std::string& name) const {
    for (std::size_t i = 0; i < fixed_names.size(); ++i)
      if (fixed_names[i] == name) return beta(static_cast<Eigen::Index>(i));
    throw ValidationError(fmt::format("fit has no fixed effect '{}'", name));
  }
};

inline double aic(double loglik, std::size_t k) { return 2.0 * static_cast<double>(k) - 2.0 * loglik; }

inline double aic(const LmmFit& fit) { return aic(fit.loglik, fit.k); }

/// AIC parameter count: fixed effects, covariance parameters, residual variance.
inline std::size_t parameter_count(const DesignMatrices& d) { return d.p() + d.theta_size() + 1; }

inline bool is_singular(const DesignMatrices& d, const std::vector<double>& theta) {
  for (auto i : d.diagonal_theta())
    if (theta[i] < kSingularTolerance) return true;
  return false;
}

namespace detail {

inline LmmFit assemble_fit(const DevianceEvaluator& eval, const std::vector<double>& theta,
                           Criterion criterion) {
  const auto& d = eval.design();
  auto sol = eval.solve(theta, criterion);
  LmmFit fit;
  fit.criterion = criterion;
  fit.fixed_names = d.fixed_names;
  fit.beta = sol.beta;
  fit.beta_se = (sol.sigma2 * sol.beta_cov_unscaled.diagonal()).array().sqrt();
  fit.theta = theta;
  fit.sigma2 = sol.sigma2;
  fit.deviance = sol.deviance;
  fit.loglik = -0.5 * sol.deviance;
  fit.n = d.n();
  fit.p = d.p();
  fit.k = parameter_count(d);
  fit.aic = aic(fit.loglik, fit.k);
  fit.singular = is_singular(d, theta);
  fit.warnings = d.warnings;
  for (std::size_t ti = 0; ti < d.terms.size(); ++ti) {
    const auto T = d.term_factor(ti, theta);
    const Eigen::MatrixXd S = sol.sigma2 * T * T.transpose();
    const auto names = d.terms[ti].term.coefficient_names();
    for (std::size_t c = 0; c < names.size(); ++c)
      for (std::size_t r = c; r < names.size(); ++r) {
        if (r != c && !d.terms[ti].term.correlated) continue;
        fit.variance.push_back({d.terms[ti].term.group, names[r], names[c],
                                S(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))});
      }
  }
  fit.variance.push_back({"Residual", "", "", sol.sigma2});
  return fit;
}

}  // namespace detail

inline LmmFit fit_lmm(const DesignMatrices& design, const FitOptions& options = {}) {
  DevianceEvaluator eval(design);
  const auto criterion = options.criterion;
  if (options.fixed_theta) {
    auto fit = detail::assemble_fit(eval, *options.fixed_theta, criterion);
    fit.converged = true;
    fit.evaluations = 1;
    return fit;
  }
  const auto lower = design.lower_bounds();
  const std::vector<double> upper(lower.size(), std::numeric_limits<double>::infinity());
  Objective f = [&](const std::vector<double>& th) { return eval(th, criterion); };

  NelderMeadOptions nm;
  nm.ftol = options.ftol;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> diag(0.1, 2.0), off(-0.5, 0.5);

  OptimResult best;
  std::size_t evaluations = 0;
  for (int start = 0; start <= options.restarts; ++start) {
    auto x0 = design.initial_theta();
    if (start > 0)
      for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = lower[i] == 0.0 ? diag(rng) : off(rng);
    auto r = nelder_mead(f, x0, lower, upper, nm);
    // one restart from the optimum guards against a collapsed simplex
    if (r.converged) {
      auto again = nelder_mead(f, r.x, lower, upper, nm);
      const auto used = r.evaluations + again.evaluations;
      if (again.f <= r.f) r = again;
      r.evaluations = used;
    }
    evaluations += r.evaluations;
    if (r.f < best.f || (start == 0 && !std::isfinite(best.f))) best = r;
  }
  if (!std::isfinite(best.f)) throw NumericError("profiled deviance is not finite at any start");
  const auto before_polish = best.evaluations;
  if (options.polish && !best.x.empty()) best = newton_polish(f, best, lower, upper);
  evaluations += best.evaluations - before_polish;
  // snap numerically-zero diagonals onto the boundary
  for (auto i : design.diagonal_theta())
    if (best.x[i] < 1e-7) {
      auto snapped = best.x;
      snapped[i] = 0.0;
      double fs = detail::safe_eval(f, snapped);
      if (fs <= best.f + 1e-10) {
        best.x = snapped;
        best.f = std::min(fs, best.f);
      }
    }
  auto fit = detail::assemble_fit(eval, best.x, criterion);
  fit.converged = best.converged;
  fit.evaluations = evaluations;
  if (!fit.converged)
    fit.warnings.push_back("optimizer reached its evaluation budget before converging");
  if (fit.singular) fit.warnings.push_back("singular fit: a variance parameter is on its boundary");
  return fit;
}

}  // namespace slab::lmm
