#pragma once

// Derivative-free minimization over a box: Nelder-Mead with every trial point
// clamped to the bounds, plus a finite-difference Newton refinement.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace slab::lmm {

using Objective = std::function<double(const std::vector<double>&)>;

struct NelderMeadOptions {
  double ftol = 1e-8;          ///< stop when the simplex's f-range falls below this
  double xtol = 1e-7;          ///< ...and its vertices lie within this distance of the best
  double initial_step = 0.25;
  std::size_t max_evaluations = 0;  ///< 0 = 2000 per dimension
};

struct OptimResult {
  std::vector<double> x;
  double f = std::numeric_limits<double>::infinity();
  std::size_t evaluations = 0;
  bool converged = false;
};

namespace detail {

inline void clamp_to(std::vector<double>& x, const std::vector<double>& lo,
                     const std::vector<double>& hi) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
}

/// f with non-finite or throwing evaluations mapped to +inf.
inline double safe_eval(const Objective& f, const std::vector<double>& x) {
  try {
    double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const std::exception&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

inline OptimResult nelder_mead(const Objective& f, std::vector<double> x0,
                               const std::vector<double>& lower, const std::vector<double>& upper,
                               const NelderMeadOptions& opt = {}) {
  const std::size_t n = x0.size();
  OptimResult res;
  detail::clamp_to(x0, lower, upper);
  if (n == 0) {
    res.x = x0;
    res.f = detail::safe_eval(f, x0);
    res.evaluations = 1;
    res.converged = true;
    return res;
  }
  const std::size_t budget = opt.max_evaluations ? opt.max_evaluations : 2000 * n;

  std::vector<std::vector<double>> simplex(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    double step = opt.initial_step * std::max(1.0, std::abs(x0[i]));
    // step away from a bound that would swallow the move
    if (x0[i] + step > upper[i]) step = -step;
    simplex[i + 1][i] += step;
    detail::clamp_to(simplex[i + 1], lower, upper);
  }
  for (std::size_t i = 0; i <= n; ++i) fv[i] = detail::safe_eval(f, simplex[i]);
  res.evaluations = n + 1;

  std::vector<std::size_t> order(n + 1);
  auto trial = [&](const std::vector<double>& centroid, std::size_t worst, double coef) {
    std::vector<double> x(n);
    for (std::size_t j = 0; j < n; ++j) x[j] = centroid[j] + coef * (simplex[worst][j] - centroid[j]);
    detail::clamp_to(x, lower, upper);
    ++res.evaluations;
    return std::pair{x, detail::safe_eval(f, x)};
  };

  while (res.evaluations < budget) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
    const auto best = order.front(), worst = order.back(), second = order[n - 1];

    double spread = 0.0;
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        spread = std::max(spread, std::abs(simplex[i][j] - simplex[best][j]));
    if (fv[worst] - fv[best] <= opt.ftol && spread <= opt.xtol) {
      res.converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i)
      if (i != worst)
        for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j] / static_cast<double>(n);

    auto [xr, fr] = trial(centroid, worst, -1.0);
    if (fr < fv[best]) {
      auto [xe, fe] = trial(centroid, worst, -2.0);
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    auto [xc, fc] = trial(centroid, worst, outside ? -0.5 : 0.5);
    if (fc < std::min(fr, fv[worst])) {
      simplex[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < n; ++j)
        simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
      fv[i] = detail::safe_eval(f, simplex[i]);
      ++res.evaluations;
    }
  }
  auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  res.x = simplex[best];
  res.f = fv[best];
  return res;
}

/// Newton steps with central-difference derivatives on coordinates that are
/// not pinned to a bound.
inline OptimResult newton_polish(const Objective& f, OptimResult start,
                                 const std::vector<double>& lower, const std::vector<double>& upper,
                                 int max_iterations = 20, double h = 1e-4) {
  const std::size_t n = start.x.size();
  for (int it = 0; it < max_iterations; ++it) {
    auto& x = start.x;
    std::vector<std::size_t> freev;
    Eigen::VectorXd grad_all(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const bool at_lower = xm[i] < lower[i];
      if (at_lower) xm[i] = x[i];
      const double fp = detail::safe_eval(f, xp), fm = detail::safe_eval(f, xm);
      start.evaluations += 2;
      grad_all(static_cast<Eigen::Index>(i)) = (fp - fm) / (xp[i] - xm[i]);
      // a coordinate on its bound with the slope pushing outward stays put
      const bool pinned = x[i] - lower[i] < h && grad_all(static_cast<Eigen::Index>(i)) > 0.0;
      if (!pinned && !at_lower) freev.push_back(i);
    }
    if (freev.empty()) break;
    const auto m = static_cast<Eigen::Index>(freev.size());
    Eigen::VectorXd g(m);
    Eigen::MatrixXd H(m, m);
    for (Eigen::Index a = 0; a < m; ++a) g(a) = grad_all(static_cast<Eigen::Index>(freev[a]));
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = a; b < m; ++b) {
        auto eval = [&](double sa, double sb) {
          auto y = x;
          y[freev[a]] += sa;
          y[freev[b]] += sb;
          ++start.evaluations;
          return detail::safe_eval(f, y);
        };
        double hab;
        if (a == b)
          hab = (eval(h, 0) - 2.0 * start.f + eval(-h, 0)) / (h * h);
        else
          hab = (eval(h, h) - eval(h, -h) - eval(-h, h) + eval(-h, -h)) / (4 * h * h);
        H(a, b) = H(b, a) = hab;
      }
    }
    if (!g.allFinite() || !H.allFinite()) break;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
    Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(1e-8);
    Eigen::VectorXd step = -eig.eigenvectors() * (eig.eigenvectors().transpose() * g).cwiseQuotient(ev);
    // Near the optimum the deviance change of a Newton step is below rounding
    // noise, so steps within that noise are accepted and the loop ends once
    // the step itself is negligible.
    const double noise = 1e-11 * (1.0 + std::abs(start.f));
    bool moved = false;
    double step_norm = 0.0;
    for (double scale = 1.0; scale > 1e-6; scale *= 0.5) {
      auto y = x;
      for (Eigen::Index a = 0; a < m; ++a) y[freev[a]] += scale * step(a);
      detail::clamp_to(y, lower, upper);
      const double fy = detail::safe_eval(f, y);
      ++start.evaluations;
      if (fy <= start.f + noise) {
        step_norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) step_norm = std::max(step_norm, std::abs(y[i] - x[i]));
        start.x = y;
        start.f = fy;
        moved = true;
        break;
      }
    }
    if (!moved || step_norm < 1e-12) break;
  }
  return start;
}

}  // namespace slab::lmm
