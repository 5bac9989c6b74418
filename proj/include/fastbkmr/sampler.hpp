#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "fastbkmr/dataset.hpp"
#include "fastbkmr/error.hpp"
#include "fastbkmr/random.hpp"
#include "fastbkmr/rff.hpp"

namespace fastbkmr {

// Inverse-gamma hyperparameters are shared by sigma^2, tau^2/J and every
// theta_m. The Gaussian prior on gamma is proper but numerically flat.
struct Priors {
  double sigma_gamma2 = 1e6;
  double ig_shape = 0.001;
  double ig_rate = 0.001;
};

// How theta_m is redrawn given the frequencies.
//   Conjugate: IG(a + J/2, b + sum_j omega_jm^2 / 4), the exact full
//              conditional under omega_jm ~ N(0, 2 theta_m).
//   Verbatim:  IG(a + J/2, b + sum_j |omega_j|^2 / 2) for every m.
enum class ThetaUpdate { Conjugate, Verbatim };

inline std::string_view to_string(ThetaUpdate u) {
  return u == ThetaUpdate::Conjugate ? "conjugate" : "verbatim";
}

inline ThetaUpdate parse_theta_update(std::string_view s) {
  if (s == "conjugate") return ThetaUpdate::Conjugate;
  if (s == "verbatim") return ThetaUpdate::Verbatim;
  throw ConfigError("unknown theta_update '" + std::string(s) + "' (expected conjugate|verbatim)");
}

struct ModelState {
  Eigen::VectorXd gamma;  // P confounder coefficients
  Amplitudes amps;        // a, b (J each)
  FrequencySet freqs;     // J x M
  Eigen::VectorXd theta;  // M kernel parameters
  double tau2 = 1.0;
  double sigma2 = 1.0;

  Eigen::Index J() const { return freqs.count(); }
};

struct HmcConfig {
  double e_beta = 0.01;   // step size of the (gamma, a, b) block
  double e_omega = 0.01;  // step size of the frequency block
  int leapfrog_steps = 10;
  double e_t = 0.1;  // multiplicative tuning rate
  int tune_interval = 200;
  double accept_low = 0.65;
  double accept_high = 0.85;
};

struct ChainConfig {
  Eigen::Index J = 20;
  long K = 2000;  // total iterations; the first K/2 are burn-in
  Priors priors;
  HmcConfig hmc;
  ThetaUpdate theta_update = ThetaUpdate::Conjugate;
  std::optional<Eigen::VectorXd> theta0;  // defaults to default_theta0(X)
  std::uint64_t seed = 0;
};

// theta_m = 1 / (2 Var(x_m)): unit length-scale in standard-deviation units.
inline Eigen::VectorXd default_theta0(const Eigen::MatrixXd& X) {
  Eigen::VectorXd theta(X.cols());
  for (Eigen::Index m = 0; m < X.cols(); ++m) {
    const double mean = X.col(m).mean();
    const double ss = (X.col(m).array() - mean).square().sum();
    const double var = X.rows() > 1 ? ss / static_cast<double>(X.rows() - 1) : 0.0;
    theta[m] = var > 0.0 ? 1.0 / (2.0 * var) : 1.0;
  }
  return theta;
}

namespace detail {

inline double sample_variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

inline bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Regression block Theta = (gamma, a, b)

// B = [Z | cos | sin], n x (P + 2J).
inline Eigen::MatrixXd regression_design(const Dataset& data, const FrequencySet& freqs) {
  const TrigFeatures t = trig_features(data.X, freqs);
  Eigen::MatrixXd B(data.n(), data.confounders() + 2 * freqs.count());
  B << data.Z, t.cos, t.sin;
  return B;
}

// Diagonal of S^{-1}: 1/sigma_gamma^2 for gamma, J/tau^2 for each amplitude.
inline Eigen::VectorXd regression_prior_precision(Eigen::Index P, Eigen::Index J, double tau2,
                                                  const Priors& priors) {
  if (!(tau2 > 0.0)) throw NumericalError("regression block: tau2 must be positive");
  if (!(priors.sigma_gamma2 > 0.0)) throw ConfigError("sigma_gamma2 must be positive");
  Eigen::VectorXd prec(P + 2 * J);
  prec.head(P).setConstant(1.0 / priors.sigma_gamma2);
  prec.tail(2 * J).setConstant(static_cast<double>(J) / tau2);
  return prec;
}

inline Eigen::VectorXd pack_regression(const ModelState& s) {
  const Eigen::Index P = s.gamma.size(), J = s.amps.count();
  Eigen::VectorXd v(P + 2 * J);
  v << s.gamma, s.amps.a, s.amps.b;
  return v;
}

inline void unpack_regression(const Eigen::VectorXd& v, ModelState& s) {
  const Eigen::Index P = s.gamma.size(), J = s.amps.count();
  s.gamma = v.head(P);
  s.amps.a = v.segment(P, J);
  s.amps.b = v.tail(J);
}

// L(Theta) = -|Y - B Theta|^2 / (2 sigma^2) - Theta' S^{-1} Theta / 2
class RegressionBlock {
 public:
  RegressionBlock(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, Eigen::VectorXd precision,
                  double sigma2)
      : B_(design), y_(y), prec_(std::move(precision)), sigma2_(sigma2) {
    if (!(sigma2 > 0.0)) throw NumericalError("regression block: sigma2 must be positive");
    require_dim("regression block: design columns", prec_.size(), B_.cols());
    require_dim("regression block: design rows", y_.size(), B_.rows());
  }

  double log_density(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd r = y_ - B_ * theta;
    return -0.5 * r.squaredNorm() / sigma2_ - 0.5 * (prec_.array() * theta.array().square()).sum();
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const {
    const Eigen::VectorXd r = y_ - B_ * theta;
    Eigen::VectorXd g = B_.transpose() * r;
    g /= sigma2_;
    g.array() -= prec_.array() * theta.array();
    return g;
  }

  // Maximizer of L: (B'B + sigma^2 S^{-1}) Theta = B'Y.
  Eigen::VectorXd mode() const {
    Eigen::MatrixXd A = B_.transpose() * B_;
    A.diagonal() += sigma2_ * prec_;
    const Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success)
      throw NumericalError("penalized normal equations are singular");
    return llt.solve(B_.transpose() * y_);
  }

 private:
  const Eigen::MatrixXd& B_;
  const Eigen::VectorXd& y_;
  Eigen::VectorXd prec_;
  double sigma2_;
};

inline double log_density_theta_block(const ModelState& s, const Dataset& data, const Priors& priors) {
  const Eigen::MatrixXd B = regression_design(data, s.freqs);
  const RegressionBlock block(B, data.Y, regression_prior_precision(data.confounders(), s.J(), s.tau2, priors),
                              s.sigma2);
  return block.log_density(pack_regression(s));
}

inline Eigen::VectorXd grad_theta_block(const ModelState& s, const Dataset& data, const Priors& priors) {
  const Eigen::MatrixXd B = regression_design(data, s.freqs);
  const RegressionBlock block(B, data.Y, regression_prior_precision(data.confounders(), s.J(), s.tau2, priors),
                              s.sigma2);
  return block.gradient(pack_regression(s));
}

// ---------------------------------------------------------------------------
// Frequency block Omega (J x M, flattened column-major)

// L(Omega) = -|Y - Zgamma - Bcos a - Bsin b|^2 / (2 sigma^2)
//            - sum_j omega_j' Sigma^{-1} omega_j / 2,  Sigma = diag(2 theta).
class FrequencyBlock {
 public:
  FrequencyBlock(const Eigen::MatrixXd& X, Eigen::VectorXd target, const Amplitudes& amps,
                 const Eigen::VectorXd& theta, double sigma2)
      : X_(X), target_(std::move(target)), amps_(amps), theta_(theta), sigma2_(sigma2) {
    if (!(sigma2 > 0.0)) throw NumericalError("frequency block: sigma2 must be positive");
    require_dim("frequency block: theta length", X_.cols(), theta_.size());
    require_dim("frequency block: target length", X_.rows(), target_.size());
    require_dim("frequency block: amplitude lengths", amps_.a.size(), amps_.b.size());
    for (Eigen::Index m = 0; m < theta_.size(); ++m)
      if (!(theta_[m] >= 0.0)) throw NumericalError("frequency block: theta must be nonnegative");
  }

  Eigen::Index J() const { return amps_.a.size(); }
  Eigen::Index M() const { return X_.cols(); }

  double log_density(const Eigen::VectorXd& flat) const {
    const FrequencySet f = unflatten(flat);
    const TrigFeatures t = trig_features(X_, f);
    const Eigen::VectorXd r = residual(t);
    return -0.5 * r.squaredNorm() / sigma2_ - prior_penalty(f.omega);
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& flat) const {
    const FrequencySet f = unflatten(flat);
    const TrigFeatures t = trig_features(X_, f);
    const Eigen::VectorXd r = residual(t);
    // D = Bsin .* a' - Bcos .* b'
    Eigen::MatrixXd D = t.sin * amps_.a.asDiagonal();
    D.noalias() -= t.cos * amps_.b.asDiagonal();
    const Eigen::MatrixXd XR = X_.array().colwise() * r.array();
    Eigen::MatrixXd G = D.transpose() * XR;
    G /= -sigma2_;
    G -= prior_gradient(f.omega);
    return Eigen::Map<const Eigen::VectorXd>(G.data(), G.size());
  }

  // Half the quadratic form sum_j omega_j' Sigma^{-1} omega_j.
  double prior_penalty(const Eigen::MatrixXd& omega) const {
    double pen = 0.0;
    for (Eigen::Index m = 0; m < omega.cols(); ++m) {
      const double ss = omega.col(m).squaredNorm();
      if (theta_[m] == 0.0) {
        if (ss != 0.0) throw NumericalError("frequency block: theta_" + std::to_string(m + 1) +
                                            " is zero but its frequencies are not");
        continue;
      }
      pen += 0.5 * ss / (2.0 * theta_[m]);
    }
    return pen;
  }

  Eigen::MatrixXd prior_gradient(const Eigen::MatrixXd& omega) const {
    Eigen::MatrixXd g(omega.rows(), omega.cols());
    for (Eigen::Index m = 0; m < omega.cols(); ++m) {
      if (theta_[m] == 0.0) {
        if (omega.col(m).squaredNorm() != 0.0)
          throw NumericalError("frequency block: theta_" + std::to_string(m + 1) +
                               " is zero but its frequencies are not");
        g.col(m).setZero();
        continue;
      }
      g.col(m) = omega.col(m) / (2.0 * theta_[m]);
    }
    return g;
  }

  FrequencySet unflatten(const Eigen::VectorXd& flat) const {
    require_dim("frequency block: flattened size", J() * M(), flat.size());
    return FrequencySet{Eigen::Map<const Eigen::MatrixXd>(flat.data(), J(), M())};
  }

 private:
  Eigen::VectorXd residual(const TrigFeatures& t) const {
    Eigen::VectorXd r = target_;
    r.noalias() -= t.cos * amps_.a;
    r.noalias() -= t.sin * amps_.b;
    return r;
  }

  const Eigen::MatrixXd& X_;
  Eigen::VectorXd target_;  // Y - Z gamma
  const Amplitudes& amps_;
  const Eigen::VectorXd& theta_;
  double sigma2_;
};

inline Eigen::VectorXd flatten(const FrequencySet& f) {
  return Eigen::Map<const Eigen::VectorXd>(f.omega.data(), f.omega.size());
}

inline double log_density_omega_block(const ModelState& s, const Dataset& data, const Priors&) {
  const FrequencyBlock block(data.X, data.Y - data.Z * s.gamma, s.amps, s.theta, s.sigma2);
  return block.log_density(flatten(s.freqs));
}

inline Eigen::MatrixXd grad_omega_block(const ModelState& s, const Dataset& data, const Priors&) {
  const FrequencyBlock block(data.X, data.Y - data.Z * s.gamma, s.amps, s.theta, s.sigma2);
  const Eigen::VectorXd g = block.gradient(flatten(s.freqs));
  return Eigen::Map<const Eigen::MatrixXd>(g.data(), s.J(), data.exposures());
}

// ---------------------------------------------------------------------------
// HMC

// n_steps leapfrog steps of size e. Each step is a half kick, a full drift and
// a second half kick; the gradient at the end of one step is reused at the
// start of the next.
template <class Gradient>
std::pair<Eigen::VectorXd, Eigen::VectorXd> leapfrog(Eigen::VectorXd position, Eigen::VectorXd momentum,
                                                     double e, int n_steps, Gradient&& grad) {
  Eigen::VectorXd g = grad(position);
  if (!detail::all_finite(g)) throw DivergenceError(0);
  for (int l = 1; l <= n_steps; ++l) {
    momentum.noalias() += (0.5 * e) * g;
    position.noalias() += e * momentum;
    g = grad(position);
    if (!detail::all_finite(g)) throw DivergenceError(l);
    momentum.noalias() += (0.5 * e) * g;
  }
  return {std::move(position), std::move(momentum)};
}

// min(1, exp(L(q~) - r~.r~/2) / exp(L(q) - r0.r0/2)); 0 for non-finite input.
inline double acceptance_probability(double current_log_density, const Eigen::VectorXd& initial_momentum,
                                     double proposal_log_density, const Eigen::VectorXd& final_momentum) {
  const double log_ratio = (proposal_log_density - 0.5 * final_momentum.squaredNorm()) -
                           (current_log_density - 0.5 * initial_momentum.squaredNorm());
  if (std::isnan(log_ratio)) return 0.0;
  if (log_ratio >= 0.0) return 1.0;
  return std::exp(log_ratio);
}

struct HmcResult {
  Eigen::VectorXd position;
  bool accepted = false;
  bool divergent = false;
  double accept_prob = 0.0;
};

template <class LogDensity, class Gradient>
HmcResult hmc_update(const Eigen::VectorXd& current, LogDensity&& log_density, Gradient&& grad, double e,
                     int n_steps, Rng& rng) {
  if (!(e > 0.0)) throw ConfigError("hmc_update: step size must be positive");
  if (n_steps < 1) throw ConfigError("hmc_update: leapfrog steps must be at least 1");
  const Eigen::VectorXd r0 = standard_normal_vector(current.size(), rng);
  const double u = uniform01(rng);
  HmcResult out{current};
  Eigen::VectorXd q, r;
  try {
    std::tie(q, r) = leapfrog(current, r0, e, n_steps, grad);
  } catch (const DivergenceError&) {
    out.divergent = true;
    return out;
  }
  r = -r;
  const double proposal = log_density(q);
  if (!std::isfinite(proposal) || !detail::all_finite(q)) {
    out.divergent = true;
    return out;
  }
  out.accept_prob = acceptance_probability(log_density(current), r0, proposal, r);
  if (u < out.accept_prob) {
    out.position = std::move(q);
    out.accepted = true;
  }
  return out;
}

// Step-size rule applied at the end of each tuning interval.
inline double tune_step_size(double e, double acceptance_rate, double e_t, double low, double high) {
  if (acceptance_rate > high) return e * (1.0 + e_t);
  if (acceptance_rate < low) return e * (1.0 - e_t);
  return e;
}

// ---------------------------------------------------------------------------
// Gibbs full conditionals

inline InverseGamma theta_conditional(const FrequencySet& freqs, Eigen::Index m, const Priors& priors,
                                      ThetaUpdate mode) {
  const double J = static_cast<double>(freqs.count());
  const double shape = priors.ig_shape + 0.5 * J;
  if (mode == ThetaUpdate::Conjugate)
    return {shape, priors.ig_rate + 0.25 * freqs.omega.col(m).squaredNorm()};
  return {shape, priors.ig_rate + 0.5 * freqs.omega.squaredNorm()};
}

inline Eigen::VectorXd gibbs_theta(const FrequencySet& freqs, const Priors& priors, ThetaUpdate mode,
                                   Rng& rng) {
  if (freqs.count() < 1) throw DataError("gibbs_theta: J must be at least 1");
  Eigen::VectorXd theta(freqs.dims());
  for (Eigen::Index m = 0; m < freqs.dims(); ++m)
    theta[m] = std::max(theta_conditional(freqs, m, priors, mode).draw(rng), std::numeric_limits<double>::min());
  return theta;
}

// The prior sits on tau^2 / J, matching the amplitude variance tau^2 / J.
inline InverseGamma tau2_conditional(const Amplitudes& amps, const Priors& priors) {
  const double J = static_cast<double>(amps.count());
  return {priors.ig_shape + J, priors.ig_rate + 0.5 * (amps.a.squaredNorm() + amps.b.squaredNorm())};
}

inline double gibbs_tau2(const Amplitudes& amps, const Priors& priors, Rng& rng) {
  require_dim("gibbs_tau2: sine amplitudes", amps.a.size(), amps.b.size());
  return static_cast<double>(amps.count()) * tau2_conditional(amps, priors).draw(rng);
}

inline InverseGamma sigma2_conditional(const Eigen::VectorXd& residuals, const Priors& priors) {
  return {priors.ig_shape + 0.5 * static_cast<double>(residuals.size()),
          priors.ig_rate + 0.5 * residuals.squaredNorm()};
}

inline double gibbs_sigma2(const Eigen::VectorXd& residuals, const Priors& priors, Rng& rng) {
  if (!residuals.allFinite()) throw NumericalError("gibbs_sigma2: non-finite residuals");
  return sigma2_conditional(residuals, priors).draw(rng);
}

// ---------------------------------------------------------------------------
// Initialization

// Frequencies from theta0 (clamped to >= 1e-8); (gamma, a, b) from the
// penalized normal equations, first with provisional sigma^2 = tau^2 = Var(Y)/2
// and then refit with sigma^2 = RSS/n and tau^2 = max(Var(Y) - sigma^2,
// 0.1 Var(Y)). sigma^2 is finally the refit's residual mean square.
inline ModelState initialize(const Dataset& data, const Eigen::VectorXd& theta0, Eigen::Index J,
                             const Priors& priors, Rng& rng) {
  data.validate();
  if (J < 1) throw ConfigError("initialize: J must be at least 1");
  require_dim("initialize: theta0 length", data.exposures(), theta0.size());
  if (data.n() < 1) throw DataError("initialize: empty dataset");

  ModelState s;
  s.theta = theta0;
  for (Eigen::Index m = 0; m < s.theta.size(); ++m) {
    if (!(s.theta[m] >= 0.0)) throw ConfigError("initialize: theta0 must be nonnegative");
    s.theta[m] = std::max(s.theta[m], 1e-8);
  }
  s.freqs = sample_frequencies(s.theta, J, rng);
  s.gamma = Eigen::VectorXd::Zero(data.confounders());
  s.amps = Amplitudes{Eigen::VectorXd::Zero(J), Eigen::VectorXd::Zero(J)};

  const Eigen::MatrixXd B = regression_design(data, s.freqs);
  double var_y = detail::sample_variance(data.Y);
  if (!(var_y > 0.0)) var_y = std::max(data.Y.squaredNorm() / static_cast<double>(data.n()), 1.0);
  const double floor_sigma2 = 1e-12 * var_y;
  const double n = static_cast<double>(data.n());

  auto fit = [&](double sigma2, double tau2) {
    const RegressionBlock block(B, data.Y, regression_prior_precision(data.confounders(), J, tau2, priors),
                                sigma2);
    const Eigen::VectorXd theta = block.mode();
    const double rss = (data.Y - B * theta).squaredNorm();
    return std::make_pair(theta, std::max(rss / n, floor_sigma2));
  };

  auto [coef, sigma2] = fit(0.5 * var_y, 0.5 * var_y);
  const double tau2 = std::max(var_y - sigma2, 0.1 * var_y);
  std::tie(coef, sigma2) = fit(sigma2, tau2);
  unpack_regression(coef, s);
  s.tau2 = tau2;
  s.sigma2 = sigma2;
  return s;
}

// ---------------------------------------------------------------------------
// Chain

struct BlockStats {
  long proposals = 0;
  long accepted = 0;
  long divergent = 0;

  double rate() const { return proposals > 0 ? static_cast<double>(accepted) / static_cast<double>(proposals) : 0.0; }
};

// Retained second-half draws of a chain.
struct PosteriorSamples {
  std::vector<ModelState> draws;
  Eigen::MatrixXd h;  // draws x n, h evaluated at the training exposures
  BlockStats regression_block;  // post-burn-in
  BlockStats frequency_block;   // post-burn-in
  long total_iterations = 0;
  long burn_in = 0;
  double final_e_beta = 0.0;
  double final_e_omega = 0.0;
  std::vector<std::string> warnings;

  Eigen::Index size() const { return static_cast<Eigen::Index>(draws.size()); }
};

// One Markov chain. Each step runs, in order: theta (Gibbs), (gamma, a, b)
// (HMC), Omega (HMC), tau^2 (Gibbs), sigma^2 (Gibbs).
class Chain {
 public:
  Chain(Dataset data, ChainConfig cfg)
      : data_(std::move(data)), cfg_(std::move(cfg)), rng_(cfg_.seed), e_beta_(cfg_.hmc.e_beta),
        e_omega_(cfg_.hmc.e_omega) {
    check_config();
    const Eigen::VectorXd theta0 = cfg_.theta0 ? *cfg_.theta0 : default_theta0(data_.X);
    state_ = initialize(data_, theta0, cfg_.J, cfg_.priors, rng_);
    design_ = regression_design(data_, state_.freqs);
  }

  Chain(Dataset data, ChainConfig cfg, ModelState initial)
      : data_(std::move(data)), cfg_(std::move(cfg)), rng_(cfg_.seed), state_(std::move(initial)),
        e_beta_(cfg_.hmc.e_beta), e_omega_(cfg_.hmc.e_omega) {
    check_config();
    data_.validate();
    design_ = regression_design(data_, state_.freqs);
  }

  const ModelState& state() const { return state_; }
  const Dataset& data() const { return data_; }
  double e_beta() const { return e_beta_; }
  double e_omega() const { return e_omega_; }
  void set_step_sizes(double e_beta, double e_omega) {
    if (!(e_beta > 0.0) || !(e_omega > 0.0)) throw ConfigError("step sizes must be positive");
    e_beta_ = e_beta;
    e_omega_ = e_omega;
  }

  void set_outcome(Eigen::VectorXd y) {
    require_dim("chain: outcome length", data_.n(), y.size());
    data_.Y = std::move(y);
  }

  struct StepReport {
    HmcResult regression;
    HmcResult frequency;
  };

  StepReport step() {
    StepReport rep;
    const Priors& pr = cfg_.priors;
    state_.theta = gibbs_theta(state_.freqs, pr, cfg_.theta_update, rng_);

    {
      const RegressionBlock block(design_, data_.Y,
                                  regression_prior_precision(data_.confounders(), state_.J(), state_.tau2, pr),
                                  state_.sigma2);
      rep.regression = hmc_update(
          pack_regression(state_), [&](const Eigen::VectorXd& v) { return block.log_density(v); },
          [&](const Eigen::VectorXd& v) { return block.gradient(v); }, e_beta_, cfg_.hmc.leapfrog_steps, rng_);
      if (rep.regression.accepted) unpack_regression(rep.regression.position, state_);
    }

    {
      const FrequencyBlock block(data_.X, data_.Y - data_.Z * state_.gamma, state_.amps, state_.theta,
                                 state_.sigma2);
      rep.frequency = hmc_update(
          flatten(state_.freqs), [&](const Eigen::VectorXd& v) { return block.log_density(v); },
          [&](const Eigen::VectorXd& v) { return block.gradient(v); }, e_omega_, cfg_.hmc.leapfrog_steps, rng_);
      if (rep.frequency.accepted) {
        state_.freqs = block.unflatten(rep.frequency.position);
        design_ = regression_design(data_, state_.freqs);
      }
    }

    state_.tau2 = gibbs_tau2(state_.amps, pr, rng_);
    state_.sigma2 = gibbs_sigma2(data_.Y - design_ * pack_regression(state_), pr, rng_);
    return rep;
  }

  // Runs K iterations, tuning step sizes every tune_interval iterations of
  // the first half and keeping the second half.
  PosteriorSamples run() {
    const long K = cfg_.K;
    const long burn = K / 2;
    const int interval = cfg_.hmc.tune_interval;
    PosteriorSamples out;
    out.total_iterations = K;
    out.burn_in = burn;
    out.draws.reserve(static_cast<std::size_t>(K - burn));
    out.h.resize(K - burn, data_.n());

    BlockStats win_reg, win_freq;
    for (long k = 1; k <= K; ++k) {
      const StepReport rep = step();
      count(win_reg, rep.regression);
      count(win_freq, rep.frequency);
      if (k > burn) {
        count(out.regression_block, rep.regression);
        count(out.frequency_block, rep.frequency);
        out.h.row(k - burn - 1) = evaluate_h(data_.X, state_.freqs, state_.amps).transpose();
        out.draws.push_back(state_);
      }
      if (k % interval == 0 || k == K) {
        note_divergence(out, "regression", win_reg, k);
        note_divergence(out, "frequency", win_freq, k);
        if (k <= burn && k % interval == 0) {
          const HmcConfig& h = cfg_.hmc;
          e_beta_ = tune_step_size(e_beta_, win_reg.rate(), h.e_t, h.accept_low, h.accept_high);
          e_omega_ = tune_step_size(e_omega_, win_freq.rate(), h.e_t, h.accept_low, h.accept_high);
        }
        win_reg = {};
        win_freq = {};
      }
    }
    out.final_e_beta = e_beta_;
    out.final_e_omega = e_omega_;
    return out;
  }

 private:
  void check_config() const {
    if (cfg_.J < 1) throw ConfigError("J must be at least 1");
    if (cfg_.K < 2 || cfg_.K % 2 != 0) throw ConfigError("K must be a positive even number");
    const HmcConfig& h = cfg_.hmc;
    if (!(h.e_beta > 0.0) || !(h.e_omega > 0.0)) throw ConfigError("step sizes must be positive");
    if (h.leapfrog_steps < 1) throw ConfigError("leapfrog_steps must be at least 1");
    if (!(h.e_t >= 0.0 && h.e_t <= 1.0)) throw ConfigError("e_t must lie in [0, 1]");
    if (h.tune_interval < 1) throw ConfigError("tune_interval must be at least 1");
    if (!(h.accept_low < h.accept_high)) throw ConfigError("accept_low must be below accept_high");
    const Priors& p = cfg_.priors;
    if (!(p.ig_shape > 0.0) || !(p.ig_rate > 0.0) || !(p.sigma_gamma2 > 0.0))
      throw ConfigError("prior parameters must be positive");
  }

  static void count(BlockStats& s, const HmcResult& r) {
    ++s.proposals;
    if (r.accepted) ++s.accepted;
    if (r.divergent) ++s.divergent;
  }

  static void note_divergence(PosteriorSamples& out, const char* block, const BlockStats& win, long k) {
    if (win.proposals > 0 && 2 * win.divergent > win.proposals)
      out.warnings.push_back(std::string(block) + " block diverged in " + std::to_string(win.divergent) + " of " +
                             std::to_string(win.proposals) + " proposals ending at iteration " + std::to_string(k));
  }

  Dataset data_;
  ChainConfig cfg_;
  Rng rng_;
  ModelState state_;
  Eigen::MatrixXd design_;
  double e_beta_;
  double e_omega_;
};

inline PosteriorSamples run_chain(const Dataset& data, const ChainConfig& cfg) {
  Chain chain(data, cfg);
  return chain.run();
}

}  // namespace fastbkmr
