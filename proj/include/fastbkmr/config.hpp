#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "fastbkmr/error.hpp"
#include "fastbkmr/io.hpp"
#include "fastbkmr/kernels.hpp"
#include "fastbkmr/sampler.hpp"
#include "fastbkmr/simulation.hpp"

namespace fastbkmr {

// Every run parameter, with its default. Files use one `key = value` per
// line; '#' starts a comment; lists are comma separated.
struct RunConfig {
  std::optional<std::uint64_t> seed;

  // data
  std::string outcome;
  std::vector<std::string> exposures;
  std::vector<std::string> confounders;
  bool standardize = false;

  // sampler
  int J = 20;
  int K = 2000;
  double e_beta = 0.01;
  double e_omega = 0.01;
  int leapfrog_steps = 10;
  double e_t = 0.1;
  int tune_interval = 200;
  double accept_low = 0.65;
  double accept_high = 0.85;
  double sigma_gamma2 = 1e6;
  double ig_shape = 0.001;
  double ig_rate = 0.001;
  ThetaUpdate theta_update = ThetaUpdate::Conjugate;
  std::vector<double> theta0;  // empty: 1 / (2 Var(x_m))

  // summaries
  std::vector<double> overall_percentiles = {10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60, 65, 70, 75, 80, 85, 90};
  double overall_reference = 25.0;
  std::vector<double> univariate_percentiles = {10, 50, 90};
  int grid_size = 50;
  double bivariate_fixed = 50.0;
  int bivariate_grid_size = 50;

  // waic-scan
  std::vector<int> J_values = {5, 20, 100};

  // simulate
  std::vector<int> sim_n = {200};
  std::vector<int> sim_M = {2};
  std::vector<Correlation> sim_correlation = {Correlation::Strong};
  SurfaceSource sim_source = SurfaceSource::GaussianProcess;
  KernelKind sim_kernel = KernelKind::GaussianSquared;
  double sim_holdout = 0.0;
  int sim_replicates = 10;
  double sim_tau2 = 1.0;
  double sim_sigma2 = 1.0;
  std::vector<double> sim_gamma = {0.5, -1.0, 0.8, 0.3, -0.5};
  ThetaInit sim_theta_init = ThetaInit::Heuristic;
  bool sim_oracle = false;
  int threads = 1;

  ChainConfig chain_config(int J_override = 0) const {
    ChainConfig c;
    c.J = J_override > 0 ? J_override : J;
    c.K = K;
    c.priors.sigma_gamma2 = sigma_gamma2;
    c.priors.ig_shape = ig_shape;
    c.priors.ig_rate = ig_rate;
    c.hmc = hmc_config();
    c.theta_update = theta_update;
    if (!theta0.empty()) c.theta0 = Eigen::Map<const Eigen::VectorXd>(theta0.data(), static_cast<Eigen::Index>(theta0.size()));
    c.seed = seed.value_or(0);
    return c;
  }

  HmcConfig hmc_config() const {
    HmcConfig h;
    h.e_beta = e_beta;
    h.e_omega = e_omega;
    h.leapfrog_steps = leapfrog_steps;
    h.e_t = e_t;
    h.tune_interval = tune_interval;
    h.accept_low = accept_low;
    h.accept_high = accept_high;
    return h;
  }

  ColumnSpec columns() const { return {outcome, exposures, confounders}; }
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  for (auto& f : csv_split(std::string(trim(v)))) {
    const auto t = trim(f);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

inline double parse_real(std::string_view key, std::string_view v) {
  const auto d = parse_double(v);
  if (!d || !std::isfinite(*d)) throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" + std::string(v) + "'");
  return *d;
}

inline int parse_int(std::string_view key, std::string_view v) {
  const auto d = parse_integer<int>(v);
  if (!d) throw ConfigError("config key '" + std::string(key) + "': expected an integer, got '" + std::string(v) + "'");
  return *d;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
  const auto t = trim(v);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true or false, got '" + std::string(v) + "'");
}

template <class T, class F>
std::vector<T> parse_list(std::string_view key, std::string_view v, F&& f) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(f(key, item));
  return out;
}

inline std::string join_reals(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct ConfigKey {
  const char* name;
  const char* doc;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define FASTBKMR_REAL(field, doc)                                                        \
  ConfigKey {                                                                            \
    #field, doc, [](RunConfig& c, std::string_view v) { c.field = parse_real(#field, v); }, \
        [](const RunConfig& c) { return format_double(c.field); }                        \
  }
#define FASTBKMR_INT(field, doc)                                                        \
  ConfigKey {                                                                           \
    #field, doc, [](RunConfig& c, std::string_view v) { c.field = parse_int(#field, v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                      \
  }
#define FASTBKMR_BOOL(field, doc)                                                        \
  ConfigKey {                                                                            \
    #field, doc, [](RunConfig& c, std::string_view v) { c.field = parse_bool(#field, v); }, \
        [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }       \
  }
#define FASTBKMR_REALS(field, doc)                                                                              \
  ConfigKey {                                                                                                   \
    #field, doc, [](RunConfig& c, std::string_view v) { c.field = parse_list<double>(#field, v, parse_real); }, \
        [](const RunConfig& c) { return join_reals(c.field); }                                                  \
  }
#define FASTBKMR_INTS(field, doc)                                                                            \
  ConfigKey {                                                                                                \
    #field, doc, [](RunConfig& c, std::string_view v) { c.field = parse_list<int>(#field, v, parse_int); }, \
        [](const RunConfig& c) { return join_ints(c.field); }                                                \
  }

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "random seed (required by fit and simulate)",
       [](RunConfig& c, std::string_view v) {
         if (trim(v).empty()) {
           c.seed.reset();
           return;
         }
         const auto s = parse_integer<std::uint64_t>(v);
         if (!s) throw ConfigError("config key 'seed': expected a non-negative integer, got '" + std::string(v) + "'");
         c.seed = *s;
       },
       [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string(); }},
      {"outcome", "outcome column name",
       [](RunConfig& c, std::string_view v) { c.outcome = std::string(trim(v)); },
       [](const RunConfig& c) { return c.outcome; }},
      {"exposures", "exposure column names, in order",
       [](RunConfig& c, std::string_view v) { c.exposures = split_list(v); },
       [](const RunConfig& c) { return csv_join(c.exposures); }},
      {"confounders", "confounder column names, in order (may be empty)",
       [](RunConfig& c, std::string_view v) { c.confounders = split_list(v); },
       [](const RunConfig& c) { return csv_join(c.confounders); }},
      FASTBKMR_BOOL(standardize, "divide each exposure by its sample SD"),
      FASTBKMR_INT(J, "number of random Fourier frequency pairs"),
      FASTBKMR_INT(K, "total MCMC iterations; the first half is burn-in"),
      FASTBKMR_REAL(e_beta, "initial leapfrog step size, regression block"),
      FASTBKMR_REAL(e_omega, "initial leapfrog step size, frequency block"),
      FASTBKMR_INT(leapfrog_steps, "leapfrog steps per HMC proposal"),
      FASTBKMR_REAL(e_t, "step-size tuning rate in [0, 1]"),
      FASTBKMR_INT(tune_interval, "iterations between step-size adjustments"),
      FASTBKMR_REAL(accept_low, "lower acceptance target"),
      FASTBKMR_REAL(accept_high, "upper acceptance target"),
      FASTBKMR_REAL(sigma_gamma2, "prior variance of the confounder coefficients"),
      FASTBKMR_REAL(ig_shape, "inverse-gamma prior shape"),
      FASTBKMR_REAL(ig_rate, "inverse-gamma prior rate"),
      {"theta_update", "conjugate | verbatim",
       [](RunConfig& c, std::string_view v) { c.theta_update = parse_theta_update(trim(v)); },
       [](const RunConfig& c) { return std::string(to_string(c.theta_update)); }},
      FASTBKMR_REALS(theta0, "initial theta per exposure (empty: 1/(2 Var))"),
      FASTBKMR_REALS(overall_percentiles, "percentiles for the overall effect"),
      FASTBKMR_REAL(overall_reference, "reference percentile for the overall effect"),
      FASTBKMR_REALS(univariate_percentiles, "co-exposure percentiles for univariate curves"),
      FASTBKMR_INT(grid_size, "grid points per univariate curve"),
      FASTBKMR_REAL(bivariate_fixed, "percentile of the remaining exposures on bivariate surfaces"),
      FASTBKMR_INT(bivariate_grid_size, "grid points per bivariate axis"),
      FASTBKMR_INTS(J_values, "J values for waic-scan and simulate"),
      FASTBKMR_INTS(sim_n, "simulated training sizes"),
      FASTBKMR_INTS(sim_M, "simulated exposure counts"),
      {"sim_correlation", "strong | weak (list)",
       [](RunConfig& c, std::string_view v) {
         c.sim_correlation.clear();
         for (const auto& s : split_list(v)) c.sim_correlation.push_back(parse_correlation(s));
       },
       [](const RunConfig& c) {
         std::vector<std::string> s;
         for (auto x : c.sim_correlation) s.emplace_back(to_string(x));
         return csv_join(s);
       }},
      {"sim_source", "gp | friedman",
       [](RunConfig& c, std::string_view v) { c.sim_source = parse_surface_source(trim(v)); },
       [](const RunConfig& c) { return std::string(to_string(c.sim_source)); }},
      {"sim_kernel", "gaussian | sqrt-abs | abs",
       [](RunConfig& c, std::string_view v) { c.sim_kernel = parse_kernel_kind(trim(v)); },
       [](const RunConfig& c) { return std::string(to_string(c.sim_kernel)); }},
      FASTBKMR_REAL(sim_holdout, "test rows as a fraction of n (0: none)"),
      FASTBKMR_INT(sim_replicates, "replicates per scenario"),
      FASTBKMR_REAL(sim_tau2, "true tau^2 of GP surfaces"),
      FASTBKMR_REAL(sim_sigma2, "true noise variance"),
      FASTBKMR_REALS(sim_gamma, "true confounder coefficients (5 values)"),
      {"sim_theta_init", "heuristic | truth",
       [](RunConfig& c, std::string_view v) {
         const auto t = trim(v);
         if (t == "heuristic") c.sim_theta_init = ThetaInit::Heuristic;
         else if (t == "truth") c.sim_theta_init = ThetaInit::Truth;
         else throw ConfigError("config key 'sim_theta_init': expected heuristic or truth, got '" + std::string(t) + "'");
       },
       [](const RunConfig& c) { return std::string(c.sim_theta_init == ThetaInit::Truth ? "truth" : "heuristic"); }},
      FASTBKMR_BOOL(sim_oracle, "also fit the exact GP at the true hyperparameters"),
      FASTBKMR_INT(threads, "worker threads for simulate"),
  };
  return keys;
}

#undef FASTBKMR_REAL
#undef FASTBKMR_INT
#undef FASTBKMR_BOOL
#undef FASTBKMR_REALS
#undef FASTBKMR_INTS

}  // namespace detail

inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto k = trim(key);
  for (const auto& entry : detail::config_keys())
    if (k == entry.name) {
      entry.set(cfg, value);
      return;
    }
  throw ConfigError("unknown config key '" + std::string(k) + "'");
}

// "key=value" as given on the command line.
inline void apply_assignment(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  set_config_value(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source = "config") {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    std::string_view body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(cfg, body.substr(0, eq), body.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  RunConfig cfg;
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  apply_config_text(cfg, text, path.string());
  return cfg;
}

// One "key = value" line per key, canonical order; feeding it back through
// apply_config_text reproduces the config.
inline std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : detail::config_keys()) out.emplace_back(k.name, k.get(cfg));
  return out;
}

inline std::string config_echo(const RunConfig& cfg) {
  std::string s;
  for (const auto& [k, v] : config_entries(cfg)) s += k + " = " + v + "\n";
  return s;
}

inline std::string config_help() {
  std::string s;
  const RunConfig defaults;
  for (const auto& k : detail::config_keys())
    s += std::string("  ") + k.name + " = " + k.get(defaults) + "    # " + k.doc + "\n";
  return s;
}

}  // namespace fastbkmr
