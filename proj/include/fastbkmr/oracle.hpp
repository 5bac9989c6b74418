#pragma once

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "fastbkmr/dataset.hpp"
#include "fastbkmr/error.hpp"
#include "fastbkmr/kernels.hpp"

namespace fastbkmr {

// Exact Gaussian-process conditional of h given fixed hyperparameters.
struct GpFit {
  Eigen::VectorXd h_mean;
  Eigen::VectorXd h_cov_diag;
  Eigen::VectorXd weights;  // alpha solving (tau2 K + sigma2 I) alpha = resid
};

inline constexpr Eigen::Index kMaxExactGpRows = 5000;

inline GpFit gp_posterior(const Eigen::MatrixXd& X, const Eigen::VectorXd& resid, const KernelParams& params,
                          double sigma2, KernelKind kind) {
  require_dim("gp_posterior: residual length", X.rows(), resid.size());
  if (X.rows() > kMaxExactGpRows)
    throw DataError("gp_posterior: n = " + std::to_string(X.rows()) + " exceeds the exact-GP limit of " +
                    std::to_string(kMaxExactGpRows));
  if (!(sigma2 > 0.0) || !(params.tau2 > 0.0)) throw DataError("gp_posterior: variances must be positive");

  const Eigen::MatrixXd prior_cov = params.tau2 * kernel_matrix(X, params.theta, kind);
  Eigen::MatrixXd A = prior_cov;
  A.diagonal().array() += sigma2;
  const auto chol = jittered_cholesky(A, "gp_posterior");
  const auto L = chol.lower.triangularView<Eigen::Lower>();

  GpFit fit;
  fit.weights = L.transpose().solve(L.solve(resid));
  fit.h_mean = prior_cov * fit.weights;
  const Eigen::MatrixXd V = L.solve(prior_cov);
  fit.h_cov_diag = prior_cov.diagonal() - V.colwise().squaredNorm().transpose();
  return fit;
}

// Generalized least squares estimate of gamma under Y ~ N(Z gamma, tau2 K +
// sigma2 I), i.e. the posterior mean of gamma under a flat prior.
inline Eigen::VectorXd gls_gamma(const Dataset& data, const KernelParams& params, double sigma2, KernelKind kind) {
  data.validate();
  if (data.confounders() == 0) return Eigen::VectorXd(0);
  Eigen::MatrixXd A = params.tau2 * kernel_matrix(data.X, params.theta, kind);
  A.diagonal().array() += sigma2;
  const auto chol = jittered_cholesky(A, "gls_gamma");
  const auto L = chol.lower.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd WZ = L.solve(data.Z);
  const Eigen::VectorXd Wy = L.solve(data.Y);
  const Eigen::LLT<Eigen::MatrixXd> normal(WZ.transpose() * WZ);
  if (normal.info() != Eigen::Success) throw NumericalError("gls_gamma: confounder design is singular");
  return normal.solve(WZ.transpose() * Wy);
}

inline double rmse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  require_dim("rmse: vector lengths", truth.size(), estimate.size());
  if (truth.size() == 0) return 0.0;
  return std::sqrt((estimate - truth).squaredNorm() / static_cast<double>(truth.size()));
}

}  // namespace fastbkmr
