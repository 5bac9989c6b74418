#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include <Eigen/Core>

#include "fastbkmr/dataset.hpp"
#include "fastbkmr/error.hpp"
#include "fastbkmr/kernels.hpp"
#include "fastbkmr/oracle.hpp"
#include "fastbkmr/posterior.hpp"
#include "fastbkmr/random.hpp"
#include "fastbkmr/sampler.hpp"

namespace fastbkmr {

enum class Correlation { Strong, Weak };
enum class SurfaceSource { GaussianProcess, Friedman };

inline std::string_view to_string(Correlation c) { return c == Correlation::Strong ? "strong" : "weak"; }
inline std::string_view to_string(SurfaceSource s) {
  return s == SurfaceSource::GaussianProcess ? "gp" : "friedman";
}

inline Correlation parse_correlation(std::string_view s) {
  if (s == "strong") return Correlation::Strong;
  if (s == "weak") return Correlation::Weak;
  throw ConfigError("unknown correlation '" + std::string(s) + "' (expected strong|weak)");
}

inline SurfaceSource parse_surface_source(std::string_view s) {
  if (s == "gp") return SurfaceSource::GaussianProcess;
  if (s == "friedman") return SurfaceSource::Friedman;
  throw ConfigError("unknown h source '" + std::string(s) + "' (expected gp|friedman)");
}

// Exposure standard deviations, exposures 1..10.
inline constexpr std::array<double, 10> kExposureSd = {0.9, 2.4, 1.2, 2.6, 2.8, 0.1, 1.6, 2.7, 1.7, 1.4};

inline Eigen::VectorXd default_simulation_gamma() {
  Eigen::VectorXd g(5);
  g << 0.5, -1.0, 0.8, 0.3, -0.5;
  return g;
}

struct SimulationSpec {
  Eigen::Index n = 200;
  Eigen::Index M = 2;
  Correlation correlation = Correlation::Strong;
  KernelKind kernel_kind = KernelKind::GaussianSquared;
  SurfaceSource h_source = SurfaceSource::GaussianProcess;
  double holdout_fraction = 0.0;  // test rows = round(fraction * n), drawn on top of n
  int replicates = 10;
  std::uint64_t seed = 1;
  double tau2 = 1.0;
  double sigma2 = 1.0;
  Eigen::VectorXd gamma = default_simulation_gamma();

  void validate() const {
    if (n < 1) throw ConfigError("simulation: n must be positive");
    if (M < 1 || M > static_cast<Eigen::Index>(kExposureSd.size()))
      throw ConfigError("simulation: M must lie in 1..10");
    if (h_source == SurfaceSource::Friedman && M < 5) throw ConfigError("simulation: the Friedman surface needs M >= 5");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
      throw ConfigError("simulation: holdout fraction must lie in [0, 1)");
    if (replicates < 1) throw ConfigError("simulation: replicates must be positive");
    if (!(tau2 > 0.0) || !(sigma2 > 0.0)) throw ConfigError("simulation: variances must be positive");
    if (gamma.size() != 5) throw ConfigError("simulation: gamma must have 5 entries (one per confounder)");
  }

  std::string label() const {
    std::string s = std::string(to_string(h_source)) + "-" + std::string(to_string(correlation)) + "-" +
                    std::string(to_string(kernel_kind)) + "-n" + std::to_string(n) + "-M" + std::to_string(M);
    if (holdout_fraction > 0.0) s += "-h" + std::to_string(static_cast<int>(std::lround(100.0 * holdout_fraction)));
    return s;
  }
};

inline Eigen::MatrixXd generate_exposures(Eigen::Index n, Eigen::Index M, Rng& rng) {
  if (M < 0 || M > static_cast<Eigen::Index>(kExposureSd.size()))
    throw DataError("generate_exposures: at most 10 exposures are defined (got " + std::to_string(M) + ")");
  Eigen::MatrixXd X(n, M);
  for (Eigen::Index m = 0; m < M; ++m) {
    std::normal_distribution<double> dist(0.0, kExposureSd[static_cast<std::size_t>(m)]);
    for (Eigen::Index i = 0; i < n; ++i) X(i, m) = dist(rng);
  }
  return X;
}

// N(3, 6^2), Bernoulli(0.7), N(2, 0.5^2), N(1, 5^2), Bernoulli(0.3).
inline Eigen::MatrixXd generate_confounders(Eigen::Index n, Rng& rng) {
  Eigen::MatrixXd Z(n, 5);
  auto normal_col = [&](Eigen::Index c, double mean, double sd) {
    std::normal_distribution<double> dist(mean, sd);
    for (Eigen::Index i = 0; i < n; ++i) Z(i, c) = dist(rng);
  };
  auto bernoulli_col = [&](Eigen::Index c, double p) {
    std::bernoulli_distribution dist(p);
    for (Eigen::Index i = 0; i < n; ++i) Z(i, c) = dist(rng) ? 1.0 : 0.0;
  };
  normal_col(0, 3.0, 6.0);
  bernoulli_col(1, 0.7);
  normal_col(2, 2.0, 0.5);
  normal_col(3, 1.0, 5.0);
  bernoulli_col(4, 0.3);
  return Z;
}

inline Eigen::VectorXd friedman_h(const Eigen::MatrixXd& X) {
  if (X.cols() < 5) throw DataError("friedman_h: needs at least 5 exposures (got " + std::to_string(X.cols()) + ")");
  Eigen::VectorXd h(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double x3 = X(i, 2) - 0.5;
    h[i] = -10.0 + 2.0 * std::sin(X(i, 0) * X(i, 1)) + 4.0 * x3 * x3 + 2.0 * X(i, 3) + X(i, 4);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Correlation calibration

inline std::pair<double, double> correlation_band(Correlation c) {
  return c == Correlation::Strong ? std::make_pair(0.75, 0.9) : std::make_pair(0.1, 0.3);
}

enum class CalibrationMode {
  Strict,      // error when no multiplier puts the IQR inside the band
  BestEffort,  // otherwise fall back to the geometric midpoint of the two one-sided solutions
};

struct Calibration {
  Eigen::VectorXd theta;
  double multiplier = 1.0;
  double q25 = 0.0;  // achieved quartiles of the off-diagonal kernel entries
  double median = 0.0;
  double q75 = 0.0;
  bool within_band = false;
};

class CalibrationError : public NumericalError {
 public:
  CalibrationError(const std::string& what, double q25, double q75)
      : NumericalError(what), q25_(q25), q75_(q75) {}
  double achieved_q25() const noexcept { return q25_; }
  double achieved_q75() const noexcept { return q75_; }

 private:
  double q25_, q75_;
};

// Off-diagonal kernel quartiles as a function of a multiplier c on a base
// theta. Entries are exp(-c s_ij) with s_ij the weighted pair distance, so the
// sorted distances are computed once and every evaluation is O(1).
class PairDistanceProfile {
 public:
  // Uses at most max_rows rows (the leading ones) to bound the pair count.
  PairDistanceProfile(const Eigen::MatrixXd& X, const Eigen::VectorXd& base_theta, KernelKind kind,
                      Eigen::Index max_rows = 2000) {
    const Eigen::Index n = std::min(X.rows(), max_rows);
    if (n < 2) throw DataError("calibration: at least two exposure rows are required");
    s_.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < i; ++j) {
        double s = 0.0;
        for (Eigen::Index m = 0; m < X.cols(); ++m) s += base_theta[m] * coordinate_distance(X(i, m), X(j, m), kind);
        s_.push_back(s);
      }
    std::sort(s_.begin(), s_.end());
  }

  // Type-8 quantile of exp(-c s) at probability p.
  double kernel_quantile(double c, double p) const {
    const std::size_t N = s_.size();
    const double h = (static_cast<double>(N) + 1.0 / 3.0) * p + 1.0 / 3.0;
    // ascending kernel order statistic r (1-based) corresponds to s_[N - r]
    auto k = [&](std::size_t r) { return std::exp(-c * s_[N - r]); };
    if (h <= 1.0) return k(1);
    if (h >= static_cast<double>(N)) return k(N);
    const double lo = std::floor(h);
    const std::size_t r = static_cast<std::size_t>(lo);
    return k(r) + (h - lo) * (k(r + 1) - k(r));
  }

 private:
  std::vector<double> s_;
};

namespace detail {
// Bisection on log c for the c where f(c) = target, f decreasing in c.
template <class F>
double bisect_log_multiplier(F&& f, double target) {
  double lo = std::log(1e-12), hi = std::log(1e12);
  if (f(std::exp(lo)) < target) return std::exp(lo);
  if (f(std::exp(hi)) > target) return std::exp(hi);
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(std::exp(mid)) > target ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}
}  // namespace detail

// theta = c * default_theta0(X), with c chosen so the interquartile range of
// the off-diagonal kernel entries lies in the correlation band.
inline Calibration calibrate_theta(const Eigen::MatrixXd& X, Correlation target, KernelKind kind,
                                   CalibrationMode mode = CalibrationMode::Strict) {
  const Eigen::VectorXd base = default_theta0(X);
  const PairDistanceProfile profile(X, base, kind);
  const auto [band_lo, band_hi] = correlation_band(target);

  // smallest c with q75 <= band_hi, largest c with q25 >= band_lo
  const double c_min = detail::bisect_log_multiplier([&](double c) { return profile.kernel_quantile(c, 0.75); }, band_hi);
  const double c_max = detail::bisect_log_multiplier([&](double c) { return profile.kernel_quantile(c, 0.25); }, band_lo);

  Calibration cal;
  cal.multiplier = std::sqrt(c_min * c_max);
  cal.theta = cal.multiplier * base;
  cal.q25 = profile.kernel_quantile(cal.multiplier, 0.25);
  cal.median = profile.kernel_quantile(cal.multiplier, 0.5);
  cal.q75 = profile.kernel_quantile(cal.multiplier, 0.75);
  cal.within_band = cal.q25 >= band_lo - 1e-12 && cal.q75 <= band_hi + 1e-12;
  if (!cal.within_band && mode == CalibrationMode::Strict)
    throw CalibrationError("calibrate_theta: no multiplier places the kernel IQR inside [" + std::to_string(band_lo) +
                               ", " + std::to_string(band_hi) + "]; best achieved [" + std::to_string(cal.q25) +
                               ", " + std::to_string(cal.q75) + "]",
                           cal.q25, cal.q75);
  return cal;
}

// ---------------------------------------------------------------------------
// Dataset generation

struct SimulatedData {
  Dataset train;
  std::optional<Dataset> test;
  std::optional<Calibration> calibration;  // GP surfaces only
};

inline Eigen::Index holdout_rows(const SimulationSpec& spec) {
  return static_cast<Eigen::Index>(std::llround(spec.holdout_fraction * static_cast<double>(spec.n)));
}

inline SimulatedData generate_dataset(const SimulationSpec& spec, int replicate = 0) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(replicate), 0x5eedULL}));
  const Eigen::Index n_test = holdout_rows(spec);
  const Eigen::Index N = spec.n + n_test;

  Dataset all;
  all.X = generate_exposures(N, spec.M, rng);
  all.Z = generate_confounders(N, rng);
  SimulatedData out;
  Eigen::VectorXd h;
  if (spec.h_source == SurfaceSource::GaussianProcess) {
    out.calibration = calibrate_theta(all.X, spec.correlation, spec.kernel_kind, CalibrationMode::BestEffort);
    h = sample_gp(kernel_matrix(all.X, out.calibration->theta, spec.kernel_kind), spec.tau2, rng);
  } else {
    h = friedman_h(all.X);
  }
  const Eigen::VectorXd noise = std::sqrt(spec.sigma2) * standard_normal_vector(N, rng);
  all.Y = h + all.Z * spec.gamma + noise;
  all.h_true = h;
  all.gamma_true = spec.gamma;
  complete_metadata(all);

  out.train = slice_rows(all, 0, spec.n);
  if (n_test > 0) out.test = slice_rows(all, spec.n, n_test);
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

enum class ThetaInit { Heuristic, Truth };

struct ModelConfig {
  Eigen::Index J = 20;
  long K = 2000;
  Priors priors;
  HmcConfig hmc;
  ThetaUpdate theta_update = ThetaUpdate::Conjugate;
  ThetaInit theta_init = ThetaInit::Heuristic;  // Truth uses the calibrated theta (GP surfaces)
};

struct ExperimentOptions {
  bool oracle = false;  // exact GP fit at the true hyperparameters (GP surfaces)
  unsigned threads = 0;  // 0 = hardware concurrency
};

struct ResultRow {
  std::size_t spec_index = 0;
  std::size_t config_index = 0;
  int replicate = 0;
  SimulationSpec spec;
  Eigen::Index J = 0;
  long K = 0;
  double rmse_in = std::numeric_limits<double>::quiet_NaN();
  double rmse_out = std::numeric_limits<double>::quiet_NaN();
  double rmse_oracle = std::numeric_limits<double>::quiet_NaN();
  double accept_beta = std::numeric_limits<double>::quiet_NaN();
  double accept_omega = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;  // wall clock of the chain
  std::string error;
};

inline ResultRow run_replicate(const SimulationSpec& spec, const ModelConfig& model, int replicate,
                               std::size_t config_index, bool oracle) {
  ResultRow row;
  row.replicate = replicate;
  row.config_index = config_index;
  row.spec = spec;
  row.J = model.J;
  row.K = model.K;
  try {
    const SimulatedData sim = generate_dataset(spec, replicate);
    ChainConfig cfg;
    cfg.J = model.J;
    cfg.K = model.K;
    cfg.priors = model.priors;
    cfg.hmc = model.hmc;
    cfg.theta_update = model.theta_update;
    if (model.theta_init == ThetaInit::Truth && sim.calibration) cfg.theta0 = sim.calibration->theta;
    cfg.seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(replicate), 0xc4a1ULL,
                                       static_cast<std::uint64_t>(config_index)});

    const auto t0 = std::chrono::steady_clock::now();
    const PosteriorSamples samples = run_chain(sim.train, cfg);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const Eigen::VectorXd h_hat = samples.h.colwise().mean().transpose();
    row.rmse_in = rmse(h_hat, *sim.train.h_true);
    if (sim.test) {
      const Eigen::VectorXd h_new = predict_h(samples, sim.test->X).rowwise().mean();
      row.rmse_out = rmse(h_new, *sim.test->h_true);
    }
    row.accept_beta = samples.regression_block.rate();
    row.accept_omega = samples.frequency_block.rate();

    if (oracle && sim.calibration && sim.train.n() <= kMaxExactGpRows) {
      const KernelParams truth{sim.calibration->theta, spec.tau2};
      const Eigen::VectorXd g = gls_gamma(sim.train, truth, spec.sigma2, spec.kernel_kind);
      const GpFit fit = gp_posterior(sim.train.X, sim.train.Y - sim.train.Z * g, truth, spec.sigma2, spec.kernel_kind);
      row.rmse_oracle = rmse(fit.h_mean, *sim.train.h_true);
    }
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

// Every (spec, config, replicate) triple runs as an independent task with its
// own seeds. Rows come back sorted by (spec, config, replicate) regardless of
// thread count.
inline std::vector<ResultRow> run_experiment(const std::vector<SimulationSpec>& specs,
                                             const std::vector<ModelConfig>& models,
                                             const ExperimentOptions& opts = {}) {
  for (const auto& s : specs) s.validate();
  struct Task {
    std::size_t spec, model;
    int replicate;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < specs.size(); ++s)
    for (std::size_t c = 0; c < models.size(); ++c)
      for (int r = 0; r < specs[s].replicates; ++r) tasks.push_back({s, c, r});

  std::vector<ResultRow> rows(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();) {
      const Task& task = tasks[t];
      rows[t] = run_replicate(specs[task.spec], models[task.model], task.replicate, task.model, opts.oracle);
      rows[t].spec_index = task.spec;
    }
  };
  unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(tasks.size(), 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.spec_index, a.config_index, a.replicate) < std::tie(b.spec_index, b.config_index, b.replicate);
  });
  return rows;
}

}  // namespace fastbkmr
