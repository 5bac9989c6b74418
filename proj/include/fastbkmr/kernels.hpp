#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "fastbkmr/error.hpp"
#include "fastbkmr/random.hpp"

namespace fastbkmr {

// Separable stationary kernels exp(-sum_m theta_m d_m), differing only in the
// per-coordinate distance d_m. Only GaussianSquared has the spectral density
// used by the random-feature basis; the other two exist to simulate
// misspecified surfaces.
enum class KernelKind { GaussianSquared, SqrtAbsolute, Absolute };

inline std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::GaussianSquared: return "gaussian";
    case KernelKind::SqrtAbsolute: return "sqrt-abs";
    case KernelKind::Absolute: return "abs";
  }
  return "?";
}

inline KernelKind parse_kernel_kind(std::string_view s) {
  if (s == "gaussian") return KernelKind::GaussianSquared;
  if (s == "sqrt-abs") return KernelKind::SqrtAbsolute;
  if (s == "abs") return KernelKind::Absolute;
  throw ConfigError("unknown kernel kind '" + std::string(s) + "' (expected gaussian|sqrt-abs|abs)");
}

struct KernelParams {
  Eigen::VectorXd theta;  // per-exposure inverse length-scales, >= 0
  double tau2 = 1.0;      // marginal variance
};

inline double coordinate_distance(double a, double b, KernelKind kind) {
  const double d = a - b;
  switch (kind) {
    case KernelKind::GaussianSquared: return d * d;
    case KernelKind::SqrtAbsolute: return std::sqrt(std::abs(d));
    case KernelKind::Absolute: return std::abs(d);
  }
  return 0.0;
}

template <class A, class B>
double kernel_value(const Eigen::MatrixBase<A>& xi, const Eigen::MatrixBase<B>& xj,
                    const Eigen::VectorXd& theta, KernelKind kind) {
  require_dim("kernel_value: xi vs theta", theta.size(), xi.size());
  require_dim("kernel_value: xj vs theta", theta.size(), xj.size());
  double s = 0.0;
  for (Eigen::Index m = 0; m < theta.size(); ++m) s += theta[m] * coordinate_distance(xi[m], xj[m], kind);
  return std::exp(-s);
}

inline Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const Eigen::VectorXd& theta,
                                     KernelKind kind) {
  require_dim("kernel_matrix: exposure columns vs theta", theta.size(), X.cols());
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double k = kernel_value(X.row(i).transpose(), X.row(j).transpose(), theta, kind);
      K(i, j) = k;
      K(j, i) = k;
    }
  }
  return K;
}

// Lower Cholesky factor of A + jitter*I. Jitter starts at 1e-10 times the mean
// diagonal and grows tenfold until the factorization succeeds or 1e-4 (also
// relative) is exceeded.
struct JitteredCholesky {
  Eigen::MatrixXd lower;
  double jitter = 0.0;
};

inline JitteredCholesky jittered_cholesky(const Eigen::MatrixXd& A, const char* context) {
  const Eigen::Index n = A.rows();
  const double scale = n > 0 ? A.diagonal().mean() : 1.0;
  const double base = scale > 0.0 ? scale : 1.0;
  double rel = 0.0;
  for (;;) {
    Eigen::MatrixXd work = A;
    const double jitter = rel * base;
    work.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(work);
    if (llt.info() == Eigen::Success) return {llt.matrixL(), jitter};
    if (rel == 0.0) {
      rel = 1e-10;
    } else if (rel * 10.0 <= 1e-4 * (1.0 + 1e-9)) {
      rel *= 10.0;
    } else {
      throw FactorizationError(context, jitter);
    }
  }
}

// One draw from N(0, tau2 * K).
inline Eigen::VectorXd sample_gp(const Eigen::MatrixXd& K, double tau2, Rng& rng) {
  require_dim("sample_gp: K must be square", K.rows(), K.cols());
  const Eigen::VectorXd z = standard_normal_vector(K.rows(), rng);
  if (tau2 == 0.0) return Eigen::VectorXd::Zero(K.rows());
  if (tau2 < 0.0) throw DataError("sample_gp: tau2 must be nonnegative");
  const auto chol = jittered_cholesky(K, "sample_gp");
  return std::sqrt(tau2) * (chol.lower * z);
}

}  // namespace fastbkmr
