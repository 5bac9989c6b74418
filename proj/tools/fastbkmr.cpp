// fastbkmr command-line driver: fit | predict | summarize | simulate | waic-scan
//
// Exit codes: 0 ok, 1 usage/config, 2 data, 3 numerical. Failures print one
// line on stderr of the form "error[<kind>]: <message>".

#include <chrono>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fastbkmr/config.hpp"
#include "fastbkmr/io.hpp"
#include "fastbkmr/posterior.hpp"
#include "fastbkmr/sampler.hpp"
#include "fastbkmr/samples_file.hpp"
#include "fastbkmr/simulation.hpp"

namespace fs = std::filesystem;
using namespace fastbkmr;
using Json = nlohmann::ordered_json;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> assignments;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "config file (key = value lines)");
  cmd->add_option("--set", o.assignments, "override one config key, KEY=VALUE (repeatable)");
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  for (const auto& a : o.assignments) apply_assignment(cfg, a);
  return cfg;
}

Json config_json(const RunConfig& cfg) {
  Json j = Json::object();
  for (const auto& [k, v] : config_entries(cfg)) j[k] = v;
  return j;
}

Json stats_json(const BlockStats& b) {
  return Json{{"accepted", b.accepted}, {"proposals", b.proposals}, {"divergent", b.divergent}, {"rate", b.rate()}};
}

std::string sidecar(const fs::path& out, const char* suffix) { return out.string() + suffix; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string estimate_fields(const EffectEstimate& e) {
  return format_double(e.point) + "," + format_double(e.lower) + "," + format_double(e.upper);
}

// ---------------------------------------------------------------------------

struct FitOptions {
  CommonOptions common;
  std::string data, out;
  std::uint64_t seed = 0;
  int J = 0, K = 0;
};

int run_fit(const FitOptions& o) {
  RunConfig cfg = resolve_config(o.common);
  cfg.seed = o.seed;
  if (o.J > 0) cfg.J = o.J;
  if (o.K > 0) cfg.K = o.K;

  const IngestReport in = ingest_csv(o.data, cfg.columns(), cfg.standardize);
  const auto t0 = std::chrono::steady_clock::now();
  SamplesFile f;
  f.config = cfg;
  f.data = in.data;
  f.rows_dropped = in.rows_dropped;
  f.samples = run_chain(in.data, cfg.chain_config());
  const double secs = seconds_since(t0);

  write_samples(o.out, f);

  Json meta;
  meta["format"] = "fastbkmr-fit-metadata";
  meta["version"] = 1;
  meta["samples_file"] = fs::path(o.out).filename().string();
  meta["data"] = {{"path", o.data}, {"rows_read", in.rows_read}, {"rows_dropped", in.rows_dropped},
                  {"n", in.data.n()}, {"M", in.data.exposures()}, {"P", in.data.confounders()}};
  meta["exposure_scale"] = std::vector<double>(in.data.exposure_scale.data(),
                                               in.data.exposure_scale.data() + in.data.exposure_scale.size());
  meta["chain"] = {{"iterations", f.samples.total_iterations},
                   {"burn_in", f.samples.burn_in},
                   {"retained_draws", f.samples.size()},
                   {"final_e_beta", f.samples.final_e_beta},
                   {"final_e_omega", f.samples.final_e_omega}};
  meta["acceptance"] = {{"regression_block", stats_json(f.samples.regression_block)},
                        {"frequency_block", stats_json(f.samples.frequency_block)}};
  meta["warnings"] = f.samples.warnings;
  meta["config"] = config_json(cfg);
  write_file_atomic(sidecar(o.out, ".meta.json"), meta.dump(2) + "\n");
  write_file_atomic(sidecar(o.out, ".timings.csv"), "stage,seconds\nchain," + format_double(secs) + "\n");

  if (in.rows_dropped > 0) std::cerr << "note: dropped " << in.rows_dropped << " rows with missing values\n";
  for (const auto& w : f.samples.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct PredictOptions {
  std::string samples, data, out;
  bool draws = false;
};

int run_predict(const PredictOptions& o) {
  const SamplesFile f = read_samples(o.samples);
  Eigen::MatrixXd X;
  std::vector<long> rows;
  if (o.data.empty()) {
    X = f.data.X;
    for (Eigen::Index i = 0; i < X.rows(); ++i) rows.push_back(i + 1);
  } else {
    long read = 0;
    X = ingest_exposures(o.data, f.data.exposure_names, f.data.exposure_scale, rows, read);
    if (static_cast<long>(rows.size()) < read)
      std::cerr << "note: skipped " << read - static_cast<long>(rows.size()) << " rows with missing exposures\n";
  }
  const Eigen::MatrixXd H = predict_h(f.samples, X);
  std::ostringstream out;
  if (o.draws) {
    out << "row";
    for (Eigen::Index s = 0; s < H.cols(); ++s) out << ",draw_" << s + 1;
    out << "\n";
    for (Eigen::Index i = 0; i < H.rows(); ++i) {
      out << rows[static_cast<std::size_t>(i)];
      for (Eigen::Index s = 0; s < H.cols(); ++s) out << ',' << format_double(H(i, s));
      out << "\n";
    }
  } else {
    out << "row,mean,lower,upper\n";
    for (Eigen::Index i = 0; i < H.rows(); ++i)
      out << rows[static_cast<std::size_t>(i)] << ',' << estimate_fields(summarize_draws(H.row(i).transpose()))
          << "\n";
  }
  write_file_atomic(o.out, out.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct SummarizeOptions {
  CommonOptions common;
  std::string samples, out_dir;
};

int run_summarize(const SummarizeOptions& o) {
  const SamplesFile f = read_samples(o.samples);
  // summary keys come from the samples file unless overridden
  RunConfig cfg = f.config;
  if (!o.common.config_path.empty()) {
    std::string text;
    try {
      text = read_file(o.common.config_path);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    apply_config_text(cfg, text, o.common.config_path);
  }
  for (const auto& a : o.common.assignments) apply_assignment(cfg, a);

  const fs::path dir(o.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  const Dataset& d = f.data;
  const Eigen::Index M = d.exposures();
  const auto raw = [&](Eigen::Index m, double v) { return v * d.exposure_scale[m]; };

  std::ostringstream overall;
  overall << "percentile,reference,point,lower,upper\n";
  for (double p : cfg.overall_percentiles)
    overall << format_double(p) << ',' << format_double(cfg.overall_reference) << ','
            << estimate_fields(overall_effect(f.samples, d.X, p, cfg.overall_reference)) << "\n";

  std::ostringstream uni;
  uni << "exposure,co_percentile,grid_index,x,x_raw,point,lower,upper\n";
  for (Eigen::Index m = 0; m < M; ++m)
    for (double p : cfg.univariate_percentiles) {
      const ResponseCurve c = univariate_response(f.samples, d.X, m, p, cfg.grid_size);
      for (Eigen::Index g = 0; g < c.grid.size(); ++g)
        uni << csv_escape(d.exposure_names[m]) << ',' << format_double(p) << ',' << g << ','
            << format_double(c.grid[g]) << ',' << format_double(raw(m, c.grid[g])) << ','
            << estimate_fields(c.estimates[static_cast<std::size_t>(g)]) << "\n";
    }

  std::ostringstream bi;
  bi << "exposure1,exposure2,fixed_percentile,x1,x2,x1_raw,x2_raw,is_reference,point,lower,upper\n";
  for (Eigen::Index m1 = 0; m1 < M; ++m1)
    for (Eigen::Index m2 = m1 + 1; m2 < M; ++m2) {
      const BivariateSurface s = bivariate_surface(f.samples, d.X, m1, m2, cfg.bivariate_fixed, cfg.bivariate_grid_size);
      for (Eigen::Index i = 0; i < s.grid1.size(); ++i)
        for (Eigen::Index j = 0; j < s.grid2.size(); ++j)
          bi << csv_escape(d.exposure_names[m1]) << ',' << csv_escape(d.exposure_names[m2]) << ','
             << format_double(s.fixed_percentile) << ',' << format_double(s.grid1[i]) << ','
             << format_double(s.grid2[j]) << ',' << format_double(raw(m1, s.grid1[i])) << ','
             << format_double(raw(m2, s.grid2[j])) << ',' << (i == s.ref1 && j == s.ref2 ? 1 : 0) << ','
             << estimate_fields(s.at(i, j)) << "\n";
    }

  const WaicResult w = waic_components(f.samples, d);
  std::ostringstream wt;
  wt << "lppd,p_waic,waic\n" << format_double(w.lppd) << ',' << format_double(w.p_waic) << ',' << format_double(w.waic) << "\n";

  write_file_atomic(dir / "overall.csv", overall.str());
  write_file_atomic(dir / "univariate.csv", uni.str());
  write_file_atomic(dir / "bivariate.csv", bi.str());
  write_file_atomic(dir / "waic.csv", wt.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct SimulateOptions {
  CommonOptions common;
  std::string out;
  std::uint64_t seed = 0;
};

int run_simulate(const SimulateOptions& o) {
  RunConfig cfg = resolve_config(o.common);
  cfg.seed = o.seed;
  if (cfg.sim_gamma.size() != 5) throw ConfigError("sim_gamma must list 5 coefficients");
  if (cfg.threads < 0) throw ConfigError("threads must be non-negative");

  std::vector<SimulationSpec> specs;
  for (int n : cfg.sim_n)
    for (int M : cfg.sim_M)
      for (Correlation c : cfg.sim_correlation) {
        SimulationSpec s;
        s.n = n;
        s.M = M;
        s.correlation = c;
        s.kernel_kind = cfg.sim_kernel;
        s.h_source = cfg.sim_source;
        s.holdout_fraction = cfg.sim_holdout;
        s.replicates = cfg.sim_replicates;
        s.seed = o.seed;
        s.tau2 = cfg.sim_tau2;
        s.sigma2 = cfg.sim_sigma2;
        s.gamma = Eigen::Map<const Eigen::VectorXd>(cfg.sim_gamma.data(), 5);
        s.validate();
        specs.push_back(s);
      }
  std::vector<ModelConfig> models;
  for (int J : cfg.J_values) {
    ModelConfig m;
    m.J = J;
    m.K = cfg.K;
    const ChainConfig cc = cfg.chain_config(J);
    m.priors = cc.priors;
    m.hmc = cc.hmc;
    m.theta_update = cc.theta_update;
    m.theta_init = cfg.sim_theta_init;
    models.push_back(m);
  }
  if (specs.empty() || models.empty()) throw ConfigError("simulate: nothing to run (empty scenario or J list)");

  ExperimentOptions eo;
  eo.oracle = cfg.sim_oracle;
  eo.threads = static_cast<unsigned>(cfg.threads);
  const auto rows = run_experiment(specs, models, eo);

  std::ostringstream res, tim;
  res << "scenario,source,correlation,kernel,n,M,holdout,J,K,replicate,rmse_in,rmse_out,rmse_oracle,"
         "accept_regression,accept_frequency,error\n";
  tim << "scenario,J,replicate,seconds\n";
  int failures = 0;
  for (const auto& r : rows) {
    const SimulationSpec& s = r.spec;
    res << s.label() << ',' << to_string(s.h_source) << ',' << to_string(s.correlation) << ','
        << to_string(s.kernel_kind) << ',' << s.n << ',' << s.M << ',' << format_double(s.holdout_fraction) << ','
        << r.J << ',' << r.K << ',' << r.replicate << ',' << format_double(r.rmse_in) << ','
        << format_double(r.rmse_out) << ',' << format_double(r.rmse_oracle) << ',' << format_double(r.accept_beta)
        << ',' << format_double(r.accept_omega) << ',' << csv_escape(r.error) << "\n";
    tim << s.label() << ',' << r.J << ',' << r.replicate << ',' << format_double(r.seconds) << "\n";
    if (!r.error.empty()) ++failures;
  }
  write_file_atomic(o.out, res.str());
  write_file_atomic(sidecar(o.out, ".timings.csv"), tim.str());

  Json meta;
  meta["format"] = "fastbkmr-simulate-metadata";
  meta["version"] = 1;
  meta["results_file"] = fs::path(o.out).filename().string();
  meta["true_gamma"] = cfg.sim_gamma;
  meta["true_sigma2"] = cfg.sim_sigma2;
  meta["true_tau2"] = cfg.sim_tau2;
  meta["rows"] = rows.size();
  meta["failed_rows"] = failures;
  meta["config"] = config_json(cfg);
  write_file_atomic(sidecar(o.out, ".meta.json"), meta.dump(2) + "\n");
  if (failures > 0) std::cerr << "warning: " << failures << " replicate(s) failed; see the error column\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct WaicOptions {
  CommonOptions common;
  std::string data, out;
  std::uint64_t seed = 0;
  std::vector<int> J;
};

int run_waic_scan(const WaicOptions& o, bool seed_given) {
  RunConfig cfg = resolve_config(o.common);
  if (seed_given) cfg.seed = o.seed;
  if (!cfg.seed) throw ConfigError("waic-scan needs a seed (--seed or 'seed' in the config)");
  if (!o.J.empty()) cfg.J_values = o.J;
  if (cfg.J_values.empty()) throw ConfigError("waic-scan: no J values given");

  const IngestReport in = ingest_csv(o.data, cfg.columns(), cfg.standardize);
  std::vector<WaicResult> results;
  std::ostringstream tim;
  tim << "J,seconds\n";
  for (int J : cfg.J_values) {
    const auto t0 = std::chrono::steady_clock::now();
    const PosteriorSamples s = run_chain(in.data, cfg.chain_config(J));
    results.push_back(waic_components(s, in.data));
    tim << J << ',' << format_double(seconds_since(t0)) << "\n";
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i)
    if (results[i].waic < results[best].waic) best = i;

  std::ostringstream out;
  out << "J,lppd,p_waic,waic,best\n";
  for (std::size_t i = 0; i < results.size(); ++i)
    out << cfg.J_values[i] << ',' << format_double(results[i].lppd) << ',' << format_double(results[i].p_waic) << ','
        << format_double(results[i].waic) << ',' << (i == best ? 1 : 0) << "\n";
  write_file_atomic(o.out, out.str());
  write_file_atomic(sidecar(o.out, ".timings.csv"), tim.str());
  return 0;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

int report(const char* kind, const std::string& msg, int code) {
  std::cerr << "error[" << kind << "]: " << one_line(msg) << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian kernel machine regression with random Fourier features"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  bool list_keys = false;
  app.add_flag("--config-keys", list_keys, "print every config key with its default and exit");

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "run the sampler on a CSV file and write a samples file");
  add_common(fit_cmd, fit.common);
  fit_cmd->add_option("-d,--data", fit.data, "input CSV")->required();
  fit_cmd->add_option("-o,--out", fit.out, "samples file to write")->required();
  fit_cmd->add_option("--seed", fit.seed, "random seed")->required();
  fit_cmd->add_option("-J", fit.J, "number of frequency pairs (overrides config)");
  fit_cmd->add_option("-K", fit.K, "MCMC iterations (overrides config)");

  PredictOptions pred;
  auto* pred_cmd = app.add_subcommand("predict", "evaluate h at new exposures from a samples file");
  pred_cmd->add_option("-s,--samples", pred.samples, "samples file")->required();
  pred_cmd->add_option("-d,--data", pred.data, "CSV with the exposure columns (default: training rows)");
  pred_cmd->add_option("-o,--out", pred.out, "output CSV")->required();
  pred_cmd->add_flag("--draws", pred.draws, "write every draw instead of mean and interval");

  SummarizeOptions summ;
  auto* summ_cmd = app.add_subcommand("summarize", "overall, univariate, bivariate and WAIC tables");
  add_common(summ_cmd, summ.common);
  summ_cmd->add_option("-s,--samples", summ.samples, "samples file")->required();
  summ_cmd->add_option("-o,--out-dir", summ.out_dir, "directory for the summary CSVs")->required();

  SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate", "run the simulation study and write a results table");
  add_common(sim_cmd, sim.common);
  sim_cmd->add_option("-o,--out", sim.out, "results CSV")->required();
  sim_cmd->add_option("--seed", sim.seed, "random seed")->required();

  WaicOptions wopt;
  auto* waic_cmd = app.add_subcommand("waic-scan", "fit over several J and tabulate WAIC");
  add_common(waic_cmd, wopt.common);
  waic_cmd->add_option("-d,--data", wopt.data, "input CSV")->required();
  waic_cmd->add_option("-o,--out", wopt.out, "output CSV")->required();
  auto* waic_seed = waic_cmd->add_option("--seed", wopt.seed, "random seed");
  waic_cmd->add_option("-J", wopt.J, "J values to compare")->delimiter(',');

  if (argc >= 2 && std::string(argv[1]) == "--config-keys") {
    std::cout << config_help();
    return 0;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("usage", e.what(), 1);
  }

  try {
    if (*fit_cmd) return run_fit(fit);
    if (*pred_cmd) return run_predict(pred);
    if (*summ_cmd) return run_summarize(summ);
    if (*sim_cmd) return run_simulate(sim);
    if (*waic_cmd) return run_waic_scan(wopt, waic_seed->count() > 0);
  } catch (const ConfigError& e) {
    return report("config", e.what(), 1);
  } catch (const DataError& e) {
    return report("data", e.what(), 2);
  } catch (const NumericalError& e) {
    return report("numerical", e.what(), 3);
  } catch (const std::bad_alloc&) {
    return report("numerical", "out of memory", 3);
  } catch (const std::exception& e) {
    return report("internal", e.what(), 3);
  }
  return report("usage", "no subcommand given", 1);
}
