#pragma once

// Profiled deviance of a linear mixed model as a function of theta.
//
// With A = Λᵀ ZᵀZ Λ + I, P = Λᵀ ZᵀX and c = Λᵀ Zᵀy, the profiled quantities are
//   M  = XᵀX − Pᵀ A⁻¹ P            (p x p, Schur complement)
//   b  = Xᵀy − Pᵀ A⁻¹ c
//   β̂  = M⁻¹ b
//   r² = yᵀy − cᵀ A⁻¹ c − bᵀ β̂      (penalized residual sum of squares)
// and
//   ML:   log|A| + n (1 + log(2π r² / n))
//   REML: log|A| + log|M| − log|XᵀX| + (n−p)(1 + log(2π r² / (n−p)))
// The −log|XᵀX| term makes the restricted likelihood the likelihood of error
// contrasts, so it is unchanged when X is reparameterized (e.g. a predictor
// is rescaled).

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "slab/error.hpp"
#include "slab/lmm/design.hpp"

namespace slab::lmm {

enum class Criterion { reml, ml };

inline std::string_view to_string(Criterion c) { return c == Criterion::reml ? "REML" : "ML"; }

/// Everything a fit reports at one theta.
struct ProfiledSolution {
  double deviance = 0.0;
  Eigen::VectorXd beta;
  double sigma2 = 0.0;
  Eigen::VectorXd b;  ///< conditional modes of the random effects, Z order
  Eigen::MatrixXd beta_cov_unscaled;  ///< M⁻¹
};

class DevianceEvaluator {
 public:
  explicit DevianceEvaluator(const DesignMatrices& design) : d_(design) {
    if (d_.n() <= d_.p())
      throw ValidationError(fmt::format("need more rows ({}) than fixed effects ({})", d_.n(), d_.p()));
    const Eigen::SparseMatrix<double> Zt = d_.Z.transpose();
    ZtZ_ = Zt * d_.Z;
    ZtX_ = Zt * d_.X;
    Zty_ = Zt * d_.y;
    XtX_ = d_.X.transpose() * d_.X;
    Xty_ = d_.X.transpose() * d_.y;
    yty_ = d_.y.squaredNorm();
    Eigen::LLT<Eigen::MatrixXd> xllt(XtX_);
    if (xllt.info() != Eigen::Success) throw NumericError("fixed-effects matrix is rank deficient");
    logdet_XtX_ = 2.0 * xllt.matrixLLT().diagonal().array().log().sum();
  }

  const DesignMatrices& design() const { return d_; }

  double operator()(const std::vector<double>& theta, Criterion criterion) const {
    return solve(theta, criterion, false).deviance;
  }

  ProfiledSolution solve(const std::vector<double>& theta, Criterion criterion,
                         bool full = true) const {
    const auto n = static_cast<double>(d_.n());
    const auto p = static_cast<double>(d_.p());
    ProfiledSolution out;
    double logdet_A = 0.0;
    Eigen::MatrixXd M = XtX_;
    Eigen::VectorXd b = Xty_;
    double rss_base = yty_;
    Eigen::MatrixXd AinvP;
    Eigen::VectorXd Ainvc;
    Eigen::SparseMatrix<double> Lambda;
    if (d_.q() > 0) {
      Lambda = d_.lambda(theta);
      const Eigen::SparseMatrix<double> Lt = Lambda.transpose();
      Eigen::SparseMatrix<double> A = Lt * ZtZ_ * Lambda;
      Eigen::SparseMatrix<double> I(A.rows(), A.cols());
      I.setIdentity();
      A += I;
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
      if (ldlt.info() != Eigen::Success) throw NumericError("penalized system is not positive definite");
      logdet_A = ldlt.vectorD().array().log().sum();
      const Eigen::MatrixXd P = Lt * ZtX_;
      const Eigen::VectorXd c = Lt * Zty_;
      AinvP = ldlt.solve(P);
      Ainvc = ldlt.solve(c);
      M -= P.transpose() * AinvP;
      b -= P.transpose() * Ainvc;
      rss_base -= c.dot(Ainvc);
    }
    Eigen::LLT<Eigen::MatrixXd> mllt(M);
    if (mllt.info() != Eigen::Success) throw NumericError("fixed-effects Schur complement is singular");
    out.beta = mllt.solve(b);
    const double r2 = std::max(rss_base - b.dot(out.beta), 0.0);
    if (!(r2 > 0.0)) throw NumericError("penalized residual sum of squares is zero");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    if (criterion == Criterion::ml) {
      out.deviance = logdet_A + n * (1.0 + std::log(two_pi * r2 / n));
      out.sigma2 = r2 / n;
    } else {
      const double logdet_M = 2.0 * mllt.matrixLLT().diagonal().array().log().sum();
      out.deviance = logdet_A + logdet_M - logdet_XtX_ +
                     (n - p) * (1.0 + std::log(two_pi * r2 / (n - p)));
      out.sigma2 = r2 / (n - p);
    }
    if (!std::isfinite(out.deviance)) throw NumericError("profiled deviance is not finite");
    if (full) {
      out.beta_cov_unscaled = mllt.solve(Eigen::MatrixXd::Identity(M.rows(), M.cols()));
      if (d_.q() > 0) {
        // u = A⁻¹(c − Pβ), b = Λu
        const Eigen::VectorXd u = Ainvc - AinvP * out.beta;
        out.b = Lambda * u;
      }
    }
    return out;
  }

 private:
  const DesignMatrices& d_;
  Eigen::SparseMatrix<double> ZtZ_;
  Eigen::MatrixXd ZtX_;
  Eigen::VectorXd Zty_;
  Eigen::MatrixXd XtX_;
  Eigen::VectorXd Xty_;
  double yty_ = 0.0;
  double logdet_XtX_ = 0.0;
};

inline double profiled_deviance(const DesignMatrices& design, const std::vector<double>& theta,
                                Criterion criterion = Criterion::reml) {
  return DevianceEvaluator(design)(theta, criterion);
}

}  // namespace slab::lmm
