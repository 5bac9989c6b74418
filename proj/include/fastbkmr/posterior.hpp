#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fastbkmr/dataset.hpp"
#include "fastbkmr/error.hpp"
#include "fastbkmr/rff.hpp"
#include "fastbkmr/sampler.hpp"

namespace fastbkmr {

// Median-unbiased sample quantile (Hyndman & Fan type 8) of a sorted sample,
// p in [0, 1].
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 0) throw DataError("quantile of an empty sample");
  const double N = static_cast<double>(n);
  const double h = (N + 1.0 / 3.0) * p + 1.0 / 3.0;  // 1-based position
  if (h <= 1.0) return sorted.front();
  if (h >= N) return sorted.back();
  const double lo = std::floor(h);
  const std::size_t k = static_cast<std::size_t>(lo) - 1;
  return sorted[k] + (h - lo) * (sorted[k + 1] - sorted[k]);
}

template <class Derived>
double quantile(const Eigen::DenseBase<Derived>& values, double p) {
  std::vector<double> v(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) v[static_cast<std::size_t>(i)] = values(i);
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, p);
}

// Per-exposure empirical percentiles (pct in [0, 100]).
inline Eigen::VectorXd column_percentiles(const Eigen::MatrixXd& X, double pct) {
  Eigen::VectorXd out(X.cols());
  for (Eigen::Index m = 0; m < X.cols(); ++m) out[m] = quantile(X.col(m), pct / 100.0);
  return out;
}

struct EffectEstimate {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// Posterior mean with the equal-tailed 95% interval. The upper bound is taken
// as minus the lower quantile of the negated draws, which equals the 97.5%
// quantile and keeps summaries of negated draws exactly negated.
inline EffectEstimate summarize_draws(const Eigen::VectorXd& draws) {
  if (draws.size() == 0) throw DataError("summarize_draws: no draws");
  EffectEstimate e;
  e.point = draws.sum() / static_cast<double>(draws.size());
  e.lower = quantile(draws, 0.025);
  e.upper = -quantile(-draws, 0.025);
  return e;
}

// q x S matrix of h evaluated at new exposure rows, one column per retained
// draw. Pure evaluation of the basis expansion, no linear solves.
inline Eigen::MatrixXd predict_h(const PosteriorSamples& samples, const Eigen::MatrixXd& X_new) {
  Eigen::MatrixXd out(X_new.rows(), samples.size());
  for (Eigen::Index s = 0; s < samples.size(); ++s) {
    const ModelState& d = samples.draws[static_cast<std::size_t>(s)];
    require_dim("predict_h: exposure columns", d.freqs.dims(), X_new.cols());
    out.col(s) = evaluate_h(X_new, d.freqs, d.amps);
  }
  return out;
}

namespace detail {

inline void check_percentile(double p, const char* what) {
  if (!(p > 0.0 && p < 100.0))
    throw DataError(std::string(what) + " percentile must lie strictly between 0 and 100 (got " +
                    std::to_string(p) + ")");
}

// h at a single exposure row for every draw.
inline Eigen::VectorXd h_at(const PosteriorSamples& samples, const Eigen::RowVectorXd& x) {
  const Eigen::MatrixXd row = x;
  Eigen::VectorXd out(samples.size());
  for (Eigen::Index s = 0; s < samples.size(); ++s) {
    const ModelState& d = samples.draws[static_cast<std::size_t>(s)];
    out[s] = evaluate_h(row, d.freqs, d.amps)[0];
  }
  return out;
}

inline Eigen::VectorXd linspace(double lo, double hi, int size) {
  if (size < 1) throw ConfigError("grid size must be at least 1");
  if (size == 1 || lo == hi) return Eigen::VectorXd::Constant(1, lo);
  return Eigen::VectorXd::LinSpaced(size, lo, hi);
}

}  // namespace detail

// Contrast of h between the profile with every exposure at its p-th
// percentile and the profile with every exposure at its p_ref-th percentile.
inline EffectEstimate overall_effect(const PosteriorSamples& samples, const Eigen::MatrixXd& X, double p,
                                     double p_ref) {
  detail::check_percentile(p, "overall_effect");
  detail::check_percentile(p_ref, "overall_effect reference");
  const Eigen::VectorXd hp = detail::h_at(samples, column_percentiles(X, p).transpose());
  const Eigen::VectorXd hr = detail::h_at(samples, column_percentiles(X, p_ref).transpose());
  return summarize_draws(hp - hr);
}

struct ResponseCurve {
  Eigen::Index exposure = 0;
  double co_percentile = 50.0;
  Eigen::VectorXd grid;                  // values of the varied exposure
  std::vector<EffectEstimate> estimates;  // contrast against grid[0]
  Eigen::VectorXd fixed_profile;         // full exposure row used (varied entry = grid[0])
  std::string fixed_description;
};

// Univariate exposure-response curve for exposure m with every other exposure
// held at its P-th percentile. The grid spans the observed range of x_m among
// rows whose co-exposures all fall between their (P-5)-th and (P+5)-th
// percentiles.
inline ResponseCurve univariate_response(const PosteriorSamples& samples, const Eigen::MatrixXd& X, Eigen::Index m,
                                         double co_percentile, int grid_size) {
  if (m < 0 || m >= X.cols()) throw DataError("univariate_response: exposure index out of range");
  detail::check_percentile(co_percentile, "univariate_response co-exposure");
  const double lo_pct = std::max(co_percentile - 5.0, 0.0);
  const double hi_pct = std::min(co_percentile + 5.0, 100.0);
  const Eigen::VectorXd qlo = column_percentiles(X, lo_pct);
  const Eigen::VectorXd qhi = column_percentiles(X, hi_pct);

  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    bool inside = true;
    for (Eigen::Index k = 0; k < X.cols() && inside; ++k)
      if (k != m) inside = X(i, k) >= qlo[k] && X(i, k) <= qhi[k];
    if (!inside) continue;
    xmin = std::min(xmin, X(i, m));
    xmax = std::max(xmax, X(i, m));
  }
  if (!(xmin <= xmax))
    throw DataError("univariate_response: no rows have every co-exposure of exposure " + std::to_string(m + 1) +
                    " within its " + std::to_string(lo_pct) + "-" + std::to_string(hi_pct) + " percentile window");

  ResponseCurve curve;
  curve.exposure = m;
  curve.co_percentile = co_percentile;
  curve.grid = detail::linspace(xmin, xmax, grid_size);
  curve.fixed_profile = column_percentiles(X, co_percentile);
  curve.fixed_profile[m] = curve.grid[0];
  curve.fixed_description = "co-exposures at percentile " + std::to_string(co_percentile);

  const Eigen::Index G = curve.grid.size();
  Eigen::MatrixXd rows = curve.fixed_profile.transpose().replicate(G, 1);
  rows.col(m) = curve.grid;
  const Eigen::MatrixXd H = predict_h(samples, rows);  // G x S
  curve.estimates.reserve(static_cast<std::size_t>(G));
  for (Eigen::Index g = 0; g < G; ++g) curve.estimates.push_back(summarize_draws((H.row(g) - H.row(0)).transpose()));
  return curve;
}

struct BivariateSurface {
  Eigen::Index exposure1 = 0;
  Eigen::Index exposure2 = 1;
  double fixed_percentile = 50.0;
  Eigen::VectorXd grid1;
  Eigen::VectorXd grid2;
  Eigen::Index ref1 = 0;  // grid1[ref1] is the 25th percentile of exposure1
  Eigen::Index ref2 = 0;
  std::vector<EffectEstimate> estimates;  // grid1.size() x grid2.size(), row-major

  const EffectEstimate& at(Eigen::Index i, Eigen::Index j) const {
    return estimates[static_cast<std::size_t>(i * grid2.size() + j)];
  }
};

namespace detail {
// Evenly spaced 5th..95th percentile grid with the 25th percentile inserted.
inline std::pair<Eigen::VectorXd, Eigen::Index> surface_axis(const Eigen::MatrixXd& X, Eigen::Index m, int size) {
  const double ref = quantile(X.col(m), 0.25);
  const Eigen::VectorXd base = linspace(quantile(X.col(m), 0.05), quantile(X.col(m), 0.95), size);
  std::vector<double> v(base.data(), base.data() + base.size());
  v.push_back(ref);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  const auto it = std::find(v.begin(), v.end(), ref);
  return {Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())),
          static_cast<Eigen::Index>(it - v.begin())};
}
}  // namespace detail

// Joint response surface over exposures (m1, m2) with the rest at
// fixed_percentile, contrasted per draw against both exposures at their 25th
// percentiles.
inline BivariateSurface bivariate_surface(const PosteriorSamples& samples, const Eigen::MatrixXd& X,
                                          Eigen::Index m1, Eigen::Index m2, double fixed_percentile,
                                          int grid_size) {
  if (m1 == m2) throw DataError("bivariate_surface: exposures must differ");
  if (m1 < 0 || m2 < 0 || m1 >= X.cols() || m2 >= X.cols())
    throw DataError("bivariate_surface: exposure index out of range");
  detail::check_percentile(fixed_percentile, "bivariate_surface fixed");

  BivariateSurface s;
  s.exposure1 = m1;
  s.exposure2 = m2;
  s.fixed_percentile = fixed_percentile;
  std::tie(s.grid1, s.ref1) = detail::surface_axis(X, m1, grid_size);
  std::tie(s.grid2, s.ref2) = detail::surface_axis(X, m2, grid_size);

  const Eigen::Index G1 = s.grid1.size(), G2 = s.grid2.size();
  const Eigen::RowVectorXd fixed = column_percentiles(X, fixed_percentile).transpose();
  Eigen::MatrixXd rows = fixed.replicate(G1 * G2, 1);
  for (Eigen::Index i = 0; i < G1; ++i)
    for (Eigen::Index j = 0; j < G2; ++j) {
      rows(i * G2 + j, m1) = s.grid1[i];
      rows(i * G2 + j, m2) = s.grid2[j];
    }
  const Eigen::MatrixXd H = predict_h(samples, rows);
  const Eigen::RowVectorXd ref = H.row(s.ref1 * G2 + s.ref2);
  s.estimates.reserve(static_cast<std::size_t>(G1 * G2));
  for (Eigen::Index r = 0; r < G1 * G2; ++r) s.estimates.push_back(summarize_draws((H.row(r) - ref).transpose()));
  return s;
}

struct WaicResult {
  double lppd = 0.0;
  double p_waic = 0.0;
  double waic = 0.0;
};

// -2 (lppd - p_WAIC) with Gaussian pointwise densities. p_WAIC sums the
// per-point variance of the log density over draws (1/S normalization).
inline WaicResult waic_components(const PosteriorSamples& samples, const Dataset& data) {
  const Eigen::Index S = samples.size();
  if (S < 2) throw DataError("waic: at least two retained draws are required");
  require_dim("waic: stored h columns", data.n(), samples.h.cols());
  const Eigen::Index n = data.n();
  Eigen::MatrixXd ll(n, S);
  for (Eigen::Index s = 0; s < S; ++s) {
    const ModelState& d = samples.draws[static_cast<std::size_t>(s)];
    const Eigen::VectorXd r = data.Y - data.Z * d.gamma - samples.h.row(s).transpose();
    const double c = -0.5 * std::log(2.0 * std::numbers::pi * d.sigma2);
    ll.col(s) = (c - 0.5 * r.array().square() / d.sigma2).matrix();
  }
  WaicResult w;
  const double logS = std::log(static_cast<double>(S));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = ll.row(i).maxCoeff();
    const double lse = mx + std::log((ll.row(i).array() - mx).exp().sum());
    w.lppd += lse - logS;
    const double mean = ll.row(i).mean();
    w.p_waic += (ll.row(i).array() - mean).square().sum() / static_cast<double>(S);
  }
  w.waic = -2.0 * (w.lppd - w.p_waic);
  if (!std::isfinite(w.waic)) throw NumericalError("waic: non-finite result");
  return w;
}

inline double waic(const PosteriorSamples& samples, const Dataset& data) {
  return waic_components(samples, data).waic;
}

}  // namespace fastbkmr
