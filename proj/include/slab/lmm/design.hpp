#pragma once

// Fixed and random design matrices for a linear mixed model.
//
// Column order is stable: X holds the intercept (if any) followed by the
// predictors in spec order, minus aliased columns. Z is grouped by term, then
// by level (levels sorted by name), then by coefficient (intercept first, then
// slopes in spec order).

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <fmt/format.h>

#include "slab/error.hpp"
#include "slab/lmm/model_frame.hpp"

namespace slab::lmm {

inline constexpr const char* kIntercept = "(Intercept)";

struct FixedSpec {
  std::vector<std::string> predictors;
  bool intercept = true;
};

struct RandomTerm {
  std::string group;
  std::vector<std::string> slopes = {};
  bool intercept = true;
  bool correlated = true;

  std::size_t columns() const { return (intercept ? 1 : 0) + slopes.size(); }

  /// Relative-covariance parameters: a lower-triangular factor when
  /// correlated, its diagonal otherwise.
  std::size_t theta_count() const {
    const auto k = columns();
    return correlated ? k * (k + 1) / 2 : k;
  }

  std::vector<std::string> coefficient_names() const {
    std::vector<std::string> names;
    if (intercept) names.emplace_back(kIntercept);
    names.insert(names.end(), slopes.begin(), slopes.end());
    return names;
  }
};

struct TermBlock {
  RandomTerm term;
  std::vector<std::string> levels;
  std::vector<std::size_t> level_of_row;
  std::size_t z_offset = 0;
  std::size_t theta_offset = 0;

  std::size_t k() const { return term.columns(); }
  std::size_t z_columns() const { return levels.size() * k(); }
};

struct DesignMatrices {
  Eigen::MatrixXd X;
  std::vector<std::string> fixed_names;
  std::vector<std::string> aliased;  ///< dropped fixed-effect columns
  std::vector<std::string> warnings;
  Eigen::SparseMatrix<double> Z;
  std::vector<TermBlock> terms;
  Eigen::VectorXd y;

  std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(X.cols()); }
  std::size_t q() const { return static_cast<std::size_t>(Z.cols()); }

  std::size_t theta_size() const {
    std::size_t s = 0;
    for (const auto& t : terms) s += t.term.theta_count();
    return s;
  }

  /// Zero for factor diagonals, unbounded below for off-diagonals.
  std::vector<double> lower_bounds() const {
    std::vector<double> lb;
    for (const auto& t : terms) {
      const auto k = t.k();
      if (!t.term.correlated) {
        lb.insert(lb.end(), k, 0.0);
        continue;
      }
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t r = c; r < k; ++r)
          lb.push_back(r == c ? 0.0 : -std::numeric_limits<double>::infinity());
    }
    return lb;
  }

  /// Indices of theta entries that sit on a factor diagonal.
  std::vector<std::size_t> diagonal_theta() const {
    std::vector<std::size_t> idx;
    auto lb = lower_bounds();
    for (std::size_t i = 0; i < lb.size(); ++i)
      if (lb[i] == 0.0) idx.push_back(i);
    return idx;
  }

  /// Starting point: identity relative covariance.
  std::vector<double> initial_theta() const {
    auto lb = lower_bounds();
    std::vector<double> theta(lb.size());
    for (std::size_t i = 0; i < lb.size(); ++i) theta[i] = lb[i] == 0.0 ? 1.0 : 0.0;
    return theta;
  }

  /// Lower-triangular k x k factor of one term.
  Eigen::MatrixXd term_factor(std::size_t term_index, const std::vector<double>& theta) const {
    const auto& t = terms.at(term_index);
    const auto k = t.k();
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    std::size_t pos = t.theta_offset;
    if (t.term.correlated) {
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t r = c; r < k; ++r) T(r, c) = theta.at(pos++);
    } else {
      for (std::size_t c = 0; c < k; ++c) T(c, c) = theta.at(pos++);
    }
    return T;
  }

  /// Block-diagonal relative covariance factor Lambda (q x q).
  Eigen::SparseMatrix<double> lambda(const std::vector<double>& theta) const {
    if (theta.size() != theta_size())
      throw ValidationError(
          fmt::format("theta has {} entries, design needs {}", theta.size(), theta_size()));
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t ti = 0; ti < terms.size(); ++ti) {
      const auto& t = terms[ti];
      const auto T = term_factor(ti, theta);
      const auto k = t.k();
      for (std::size_t j = 0; j < t.levels.size(); ++j) {
        const auto base = t.z_offset + j * k;
        for (std::size_t c = 0; c < k; ++c) {
          const auto last = t.term.correlated ? k : c + 1;
          for (std::size_t r = c; r < last; ++r)
            trips.emplace_back(static_cast<int>(base + r), static_cast<int>(base + c), T(r, c));
        }
      }
    }
    Eigen::SparseMatrix<double> L(static_cast<Eigen::Index>(q()), static_cast<Eigen::Index>(q()));
    L.setFromTriplets(trips.begin(), trips.end());
    return L;
  }
};

namespace detail {

/// Keeps columns in order, dropping any that is (numerically) a linear
/// combination of the columns already kept.
inline std::vector<std::size_t> independent_columns(const Eigen::MatrixXd& X) {
  std::vector<std::size_t> kept;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    Eigen::MatrixXd trial(X.rows(), static_cast<Eigen::Index>(kept.size() + 1));
    for (std::size_t i = 0; i < kept.size(); ++i) trial.col(static_cast<Eigen::Index>(i)) = X.col(static_cast<Eigen::Index>(kept[i]));
    trial.col(trial.cols() - 1) = X.col(c);
    if (X.col(c).norm() == 0.0) continue;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(trial);
    qr.setThreshold(1e-10);
    if (qr.rank() == trial.cols()) kept.push_back(static_cast<std::size_t>(c));
  }
  return kept;
}

}  // namespace detail

inline DesignMatrices build_design(const ModelFrame& frame, const FixedSpec& fixed,
                                   const std::vector<RandomTerm>& random) {
  frame.validate();
  const auto n = frame.rows();
  if (n == 0) throw ValidationError("cannot build a design from an empty frame");

  DesignMatrices d;
  d.y = Eigen::Map<const Eigen::VectorXd>(frame.response.data(), static_cast<Eigen::Index>(n));

  std::vector<std::string> names;
  if (fixed.intercept) names.emplace_back(kIntercept);
  for (const auto& p : fixed.predictors) names.push_back(p);
  if (names.empty()) throw ValidationError("fixed-effects specification is empty");
  Eigen::MatrixXd full(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(names.size()));
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (names[c] == kIntercept) {
      full.col(static_cast<Eigen::Index>(c)).setOnes();
      continue;
    }
    const auto& col = frame.column(names[c]);
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(col[i]))
        throw ValidationError(fmt::format("column '{}' row {} is not finite", names[c], i + 1));
      full(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = col[i];
    }
  }
  auto kept = detail::independent_columns(full);
  d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    d.X.col(static_cast<Eigen::Index>(i)) = full.col(static_cast<Eigen::Index>(kept[i]));
    d.fixed_names.push_back(names[kept[i]]);
  }
  for (std::size_t c = 0; c < names.size(); ++c)
    if (std::find(kept.begin(), kept.end(), c) == kept.end()) {
      d.aliased.push_back(names[c]);
      d.warnings.push_back(fmt::format("fixed effect '{}' is aliased and was dropped", names[c]));
    }

  std::vector<Eigen::Triplet<double>> trips;
  std::size_t z_offset = 0, theta_offset = 0;
  for (const auto& term : random) {
    if (term.columns() == 0)
      throw ValidationError(fmt::format("random term for '{}' has no columns", term.group));
    TermBlock block;
    block.term = term;
    const auto& f = frame.factor(term.group);
    std::set<std::string> levels(f.begin(), f.end());
    if (levels.size() < 2)
      throw ValidationError(
          fmt::format("grouping factor '{}' has {} level(s); need at least 2", term.group, levels.size()));
    block.levels.assign(levels.begin(), levels.end());
    std::map<std::string, std::size_t> level_index;
    for (std::size_t j = 0; j < block.levels.size(); ++j) level_index[block.levels[j]] = j;
    block.level_of_row.resize(n);
    for (std::size_t i = 0; i < n; ++i) block.level_of_row[i] = level_index[f[i]];

    std::vector<const std::vector<double>*> slope_cols;
    for (const auto& s : term.slopes) slope_cols.push_back(&frame.column(s));
    const auto k = term.columns();
    block.z_offset = z_offset;
    block.theta_offset = theta_offset;
    for (std::size_t i = 0; i < n; ++i) {
      const auto base = z_offset + block.level_of_row[i] * k;
      std::size_t c = 0;
      if (term.intercept) trips.emplace_back(static_cast<int>(i), static_cast<int>(base + c++), 1.0);
      for (const auto* col : slope_cols)
        trips.emplace_back(static_cast<int>(i), static_cast<int>(base + c++), (*col)[i]);
    }
    z_offset += block.z_columns();
    theta_offset += term.theta_count();
    d.terms.push_back(std::move(block));
  }
  d.Z.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(z_offset));
  d.Z.setFromTriplets(trips.begin(), trips.end());
  return d;
}

}  // namespace slab::lmm
