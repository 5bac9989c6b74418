#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

#include <Eigen/Core>

#include "fastbkmr/error.hpp"
#include "fastbkmr/random.hpp"

namespace fastbkmr {

// Random Fourier frequencies, one row per basis pair (J x M).
struct FrequencySet {
  Eigen::MatrixXd omega;

  Eigen::Index count() const { return omega.rows(); }
  Eigen::Index dims() const { return omega.cols(); }
};

// Amplitudes of the cosine (a) and sine (b) halves of the basis.
struct Amplitudes {
  Eigen::VectorXd a;
  Eigen::VectorXd b;

  Eigen::Index count() const { return a.size(); }
};

// Rows drawn from the spectral density of the separable Gaussian kernel,
// N(0, diag(2 theta_1, ..., 2 theta_M)).
inline FrequencySet sample_frequencies(const Eigen::VectorXd& theta, Eigen::Index J, Rng& rng) {
  if (J < 1) throw DataError("sample_frequencies: J must be at least 1");
  for (Eigen::Index m = 0; m < theta.size(); ++m)
    if (!(theta[m] >= 0.0)) throw DataError("sample_frequencies: theta must be nonnegative");
  const Eigen::Index M = theta.size();
  FrequencySet f{Eigen::MatrixXd(J, M)};
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Eigen::Index j = 0; j < J; ++j)
    for (Eigen::Index m = 0; m < M; ++m) f.omega(j, m) = std::sqrt(2.0 * theta[m]) * dist(rng);
  return f;
}

// Projections w_ij = omega_j . x_i, summed over m in a fixed order so the cosine
// and sine halves see identical arguments.
inline Eigen::MatrixXd frequency_projections(const Eigen::MatrixXd& X, const FrequencySet& freqs) {
  require_dim("frequency projections: exposure columns", freqs.dims(), X.cols());
  const Eigen::Index n = X.rows(), J = freqs.count(), M = X.cols();
  if (M == 0) return Eigen::MatrixXd::Zero(n, J);
  Eigen::MatrixXd W(n, J);
  for (Eigen::Index j = 0; j < J; ++j) W.col(j).noalias() = freqs.omega(j, 0) * X.col(0);
  for (Eigen::Index m = 1; m < M; ++m)
    for (Eigen::Index j = 0; j < J; ++j) W.col(j).noalias() += freqs.omega(j, m) * X.col(m);
  return W;
}

struct TrigFeatures {
  Eigen::MatrixXd cos;  // n x J
  Eigen::MatrixXd sin;  // n x J
};

namespace detail {

// Branch-free sine and cosine over a contiguous block. Eigen only vectorizes
// float trig, and this loop dominates the frequency update, so it is written
// so the compiler can vectorize it. Quadrant reduction uses a three-part pi/2
// (fdlibm constants) and the kernel polynomials are fdlibm's. Accurate to
// about 1 ulp for |x| < 2^20; larger arguments fall back to libm.
inline void sincos_block(const double* x, double* s, double* c, Eigen::Index n) {
  constexpr double kTwoOverPi = 6.36619772367581382433e-01;
  constexpr double kShift = 0x1.8p52;
  constexpr double P1 = 1.57079632673412561417e+00, P2 = 6.07710050630396597660e-11,
                   P3 = 2.02226624871116645580e-21;
  constexpr double S1 = -1.66666666666666324348e-01, S2 = 8.33333333332248946124e-03,
                   S3 = -1.98412698298579493134e-04, S4 = 2.75573137070700676789e-06,
                   S5 = -2.50507602534068634195e-08, S6 = 1.58969099521155010221e-10;
  constexpr double C1 = 4.16666666666666019037e-02, C2 = -1.38888888888741095749e-03,
                   C3 = 2.48015872894767294178e-05, C4 = -2.75573143513906633035e-07,
                   C5 = 2.08757232129817482790e-09, C6 = -1.13596475577881948265e-11;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = x[i];
    const double t = v * kTwoOverPi + kShift;
    const std::int64_t q = std::bit_cast<std::int64_t>(t);
    const double k = t - kShift;
    const double r = ((v - k * P1) - k * P2) - k * P3;
    const double z = r * r;
    const double sv = r + z * r * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
    const double zz = z * z;
    const double cr = z * (C1 + z * (C2 + z * C3)) + zz * zz * (C4 + z * (C5 + z * C6));
    const double hz = 0.5 * z;
    const double cw = 1.0 - hz;
    const double cv = cw + (((1.0 - cw) - hz) + z * cr);
    const bool odd = (q & 1) != 0;
    const double sa = odd ? cv : sv;
    const double ca = odd ? sv : cv;
    s[i] = (q & 2) ? -sa : sa;
    c[i] = ((q + 1) & 2) ? -ca : ca;
  }
  if ((Eigen::Map<const Eigen::ArrayXd>(x, n).abs() < 0x1p20).all()) return;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(std::fabs(x[i]) < 0x1p20)) {
      s[i] = std::sin(x[i]);
      c[i] = std::cos(x[i]);
    }
}

}  // namespace detail

inline TrigFeatures trig_features(const Eigen::MatrixXd& X, const FrequencySet& freqs) {
  const Eigen::MatrixXd W = frequency_projections(X, freqs);
  TrigFeatures t{Eigen::MatrixXd(W.rows(), W.cols()), Eigen::MatrixXd(W.rows(), W.cols())};
  detail::sincos_block(W.data(), t.sin.data(), t.cos.data(), W.size());
  return t;
}

// [cos | sin], n x 2J.
inline Eigen::MatrixXd basis_matrix(const Eigen::MatrixXd& X, const FrequencySet& freqs) {
  TrigFeatures t = trig_features(X, freqs);
  Eigen::MatrixXd B(X.rows(), 2 * freqs.count());
  B << t.cos, t.sin;
  return B;
}

// h(x_i) = sum_j a_j cos(omega_j . x_i) + b_j sin(omega_j . x_i)
inline Eigen::VectorXd evaluate_h(const Eigen::MatrixXd& X, const FrequencySet& freqs,
                                  const Amplitudes& amps) {
  require_dim("evaluate_h: cosine amplitudes", freqs.count(), amps.a.size());
  require_dim("evaluate_h: sine amplitudes", freqs.count(), amps.b.size());
  const TrigFeatures t = trig_features(X, freqs);
  Eigen::VectorXd h = t.cos * amps.a;
  h.noalias() += t.sin * amps.b;
  return h;
}

}  // namespace fastbkmr
