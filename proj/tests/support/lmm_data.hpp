#pragma once

// Synthetic mixed-model data and a dense marginal-likelihood oracle.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slab/lmm/design.hpp"

namespace slab::fixtures {

struct MixedDataOptions {
  int subjects = 12;
  int items = 10;
  double surprisal_effect = 0.4;
  double subject_sd = 0.8;
  double subject_slope_sd = 0.2;
  double item_sd = 0.5;
  double noise_sd = 1.0;
};

/// Crossed subjects x items with a covariate and a surprisal predictor.
inline lmm::ModelFrame mixed_frame(std::uint64_t seed, const MixedDataOptions& o = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> subj_int(o.subjects), subj_slope(o.subjects), item_int(o.items);
  for (auto& v : subj_int) v = o.subject_sd * z(rng);
  for (auto& v : subj_slope) v = o.subject_slope_sd * z(rng);
  for (auto& v : item_int) v = o.item_sd * z(rng);
  std::vector<double> item_surprisal(o.items), item_freq(o.items);
  for (int i = 0; i < o.items; ++i) {
    item_surprisal[i] = 4.0 + 2.0 * z(rng);
    item_freq[i] = 1.0 + z(rng);
  }
  lmm::ModelFrame f;
  auto& s = f.numeric["surprisal"];
  auto& freq = f.numeric["log_freq"];
  auto& subj = f.factors["subject"];
  auto& item = f.factors["item"];
  for (int a = 0; a < o.subjects; ++a)
    for (int i = 0; i < o.items; ++i) {
      s.push_back(item_surprisal[i]);
      freq.push_back(item_freq[i]);
      subj.push_back("s" + std::to_string(a));
      item.push_back("i" + std::to_string(i));
      f.response.push_back(2.0 + (o.surprisal_effect + subj_slope[a]) * item_surprisal[i] -
                           0.3 * item_freq[i] + subj_int[a] + item_int[i] + o.noise_sd * z(rng));
    }
  return f;
}

/// Profiled deviance computed from the dense marginal covariance
/// V = Z Λ Λᵀ Zᵀ + I (relative to σ²), independent of the sparse path.
inline double dense_deviance(const lmm::DesignMatrices& d, const std::vector<double>& theta,
                             bool reml) {
  const Eigen::MatrixXd Z = Eigen::MatrixXd(d.Z);
  const Eigen::MatrixXd Lam = Eigen::MatrixXd(d.lambda(theta));
  const auto n = static_cast<double>(d.n()), p = static_cast<double>(d.p());
  Eigen::MatrixXd V = Z * Lam * Lam.transpose() * Z.transpose();
  V += Eigen::MatrixXd::Identity(V.rows(), V.cols());
  Eigen::LDLT<Eigen::MatrixXd> vl(V);
  const Eigen::MatrixXd ViX = vl.solve(d.X);
  const Eigen::VectorXd Viy = vl.solve(d.y);
  const Eigen::MatrixXd XtViX = d.X.transpose() * ViX;
  const Eigen::VectorXd beta = XtViX.ldlt().solve(d.X.transpose() * Viy);
  const Eigen::VectorXd r = d.y - d.X * beta;
  const double r2 = r.dot(vl.solve(r));
  const double logdetV = vl.vectorD().array().log().sum();
  const double two_pi = 2.0 * std::numbers::pi;
  if (!reml) return logdetV + n * (1.0 + std::log(two_pi * r2 / n));
  const double logdet_xvx = std::log(XtViX.determinant());
  const double logdet_xx = std::log((d.X.transpose() * d.X).determinant());
  return logdetV + logdet_xvx - logdet_xx + (n - p) * (1.0 + std::log(two_pi * r2 / (n - p)));
}

/// Generalized least squares beta at theta.
inline Eigen::VectorXd gls_beta(const lmm::DesignMatrices& d, const std::vector<double>& theta) {
  const Eigen::MatrixXd Z = Eigen::MatrixXd(d.Z);
  const Eigen::MatrixXd Lam = Eigen::MatrixXd(d.lambda(theta));
  Eigen::MatrixXd V = Z * Lam * Lam.transpose() * Z.transpose();
  V += Eigen::MatrixXd::Identity(V.rows(), V.cols());
  Eigen::LDLT<Eigen::MatrixXd> vl(V);
  const Eigen::MatrixXd XtViX = d.X.transpose() * vl.solve(d.X);
  return XtViX.ldlt().solve(d.X.transpose() * vl.solve(d.y));
}

}  // namespace slab::fixtures
