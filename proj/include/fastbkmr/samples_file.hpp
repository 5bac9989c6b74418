#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fastbkmr/config.hpp"
#include "fastbkmr/dataset.hpp"
#include "fastbkmr/error.hpp"
#include "fastbkmr/io.hpp"
#include "fastbkmr/rff.hpp"
#include "fastbkmr/sampler.hpp"

namespace fastbkmr {

// Everything summarize/predict need: the config that produced the chain, the
// training data as the sampler saw it, and the retained draws.
//
// Layout (text, one record per line):
//   fastbkmr-samples 1
//   key=value header lines (n, M, P, J, K, burn_in, draws, seed, names,
//     scale, acceptance counts, final step sizes, config.<key>, warning)
//   [data]   CSV header y,x..,z.. then n rows
//   [draws]  CSV header then one row per retained draw:
//            sigma2, tau2, theta_1..M, gamma_1..P, a_1..J, b_1..J,
//            omega_1_1..omega_1_M, omega_2_1, ..., omega_J_M
//   [end]
// Doubles are written in shortest round-trip form, so reading back gives the
// exact bits that were written.
struct SamplesFile {
  RunConfig config;
  Dataset data;
  PosteriorSamples samples;
  long rows_dropped = 0;
};

inline constexpr int kSamplesVersion = 1;

namespace detail {

inline std::string join_doubles(const double* v, Eigen::Index n) {
  std::string s;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i) s.push_back(',');
    s += format_double(v[i]);
  }
  return s;
}

inline std::string stats_field(const BlockStats& b) {
  return std::to_string(b.accepted) + "," + std::to_string(b.proposals) + "," + std::to_string(b.divergent);
}

inline std::vector<double> parse_doubles(const std::string& line, const std::string& what) {
  std::vector<double> out;
  if (line.empty()) return out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    const std::string_view f(line.data() + start, (comma == std::string::npos ? line.size() : comma) - start);
    const auto v = parse_double(f);
    if (!v) throw DataError("samples file: bad number '" + std::string(f) + "' in " + what);
    out.push_back(*v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

inline std::string format_samples(const SamplesFile& f) {
  const Dataset& d = f.data;
  const PosteriorSamples& s = f.samples;
  const Eigen::Index n = d.n(), M = d.exposures(), P = d.confounders();
  const Eigen::Index J = s.draws.empty() ? f.config.J : s.draws.front().J();
  std::ostringstream out;
  out << "fastbkmr-samples " << kSamplesVersion << "\n";
  out << "n=" << n << "\nM=" << M << "\nP=" << P << "\nJ=" << J << "\n";
  out << "K=" << s.total_iterations << "\nburn_in=" << s.burn_in << "\ndraws=" << s.draws.size() << "\n";
  out << "seed=" << (f.config.seed ? std::to_string(*f.config.seed) : std::string()) << "\n";
  out << "outcome=" << csv_escape(d.outcome_name) << "\n";
  out << "exposures=" << csv_join(d.exposure_names) << "\n";
  out << "confounders=" << csv_join(d.confounder_names) << "\n";
  out << "scale=" << detail::join_doubles(d.exposure_scale.data(), d.exposure_scale.size()) << "\n";
  out << "rows_dropped=" << f.rows_dropped << "\n";
  out << "accept_regression=" << detail::stats_field(s.regression_block) << "\n";
  out << "accept_frequency=" << detail::stats_field(s.frequency_block) << "\n";
  out << "final_step_sizes=" << format_double(s.final_e_beta) << "," << format_double(s.final_e_omega) << "\n";
  for (const auto& [k, v] : config_entries(f.config)) out << "config." << k << "=" << v << "\n";
  for (const auto& w : s.warnings) out << "warning=" << w << "\n";

  out << "[data]\n";
  std::vector<std::string> cols{d.outcome_name};
  cols.insert(cols.end(), d.exposure_names.begin(), d.exposure_names.end());
  cols.insert(cols.end(), d.confounder_names.begin(), d.confounder_names.end());
  out << csv_join(cols) << "\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    out << format_double(d.Y[i]);
    for (Eigen::Index m = 0; m < M; ++m) out << ',' << format_double(d.X(i, m));
    for (Eigen::Index p = 0; p < P; ++p) out << ',' << format_double(d.Z(i, p));
    out << "\n";
  }

  out << "[draws]\n";
  std::vector<std::string> head{"sigma2", "tau2"};
  for (Eigen::Index m = 0; m < M; ++m) head.push_back("theta_" + std::to_string(m + 1));
  for (Eigen::Index p = 0; p < P; ++p) head.push_back("gamma_" + std::to_string(p + 1));
  for (Eigen::Index j = 0; j < J; ++j) head.push_back("a_" + std::to_string(j + 1));
  for (Eigen::Index j = 0; j < J; ++j) head.push_back("b_" + std::to_string(j + 1));
  for (Eigen::Index j = 0; j < J; ++j)
    for (Eigen::Index m = 0; m < M; ++m) head.push_back("omega_" + std::to_string(j + 1) + "_" + std::to_string(m + 1));
  out << csv_join(head) << "\n";
  for (const ModelState& st : s.draws) {
    out << format_double(st.sigma2) << ',' << format_double(st.tau2);
    for (Eigen::Index m = 0; m < M; ++m) out << ',' << format_double(st.theta[m]);
    for (Eigen::Index p = 0; p < P; ++p) out << ',' << format_double(st.gamma[p]);
    for (Eigen::Index j = 0; j < J; ++j) out << ',' << format_double(st.amps.a[j]);
    for (Eigen::Index j = 0; j < J; ++j) out << ',' << format_double(st.amps.b[j]);
    for (Eigen::Index j = 0; j < J; ++j)
      for (Eigen::Index m = 0; m < M; ++m) out << ',' << format_double(st.freqs.omega(j, m));
    out << "\n";
  }
  out << "[end]\n";
  return out.str();
}

inline void write_samples(const std::filesystem::path& path, const SamplesFile& f) {
  write_file_atomic(path, format_samples(f));
}

inline SamplesFile parse_samples(const std::string& text, const std::string& source = "samples file") {
  std::istringstream in(text);
  std::string line;
  auto fail = [&](const std::string& msg) -> DataError { return DataError(source + ": " + msg); };
  if (!std::getline(in, line) || line.rfind("fastbkmr-samples ", 0) != 0) throw fail("not a fastbkmr samples file");
  const auto version = parse_integer<int>(std::string_view(line).substr(17));
  if (!version || *version != kSamplesVersion)
    throw fail("unsupported samples format version '" + line.substr(17) + "'");

  SamplesFile f;
  std::unordered_map<std::string, std::string> head;
  while (std::getline(in, line) && line != "[data]") {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw fail("malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key.rfind("config.", 0) == 0) {
      try {
        set_config_value(f.config, key.substr(7), value);
      } catch (const ConfigError& e) {
        throw fail(e.what());
      }
    } else if (key == "warning") {
      f.samples.warnings.push_back(value);
    } else {
      head[key] = value;
    }
  }
  if (line != "[data]") throw fail("missing [data] section");

  auto need = [&](const char* key) -> const std::string& {
    auto it = head.find(key);
    if (it == head.end()) throw fail(std::string("missing header field '") + key + "'");
    return it->second;
  };
  auto need_long = [&](const char* key) {
    const auto v = parse_integer<long>(need(key));
    if (!v || *v < 0) throw fail(std::string("bad header field '") + key + "'");
    return *v;
  };
  const long n = need_long("n"), M = need_long("M"), P = need_long("P"), J = need_long("J");
  const long S = need_long("draws");
  f.samples.total_iterations = need_long("K");
  f.samples.burn_in = need_long("burn_in");
  f.rows_dropped = need_long("rows_dropped");

  Dataset& d = f.data;
  d.outcome_name = csv_split(need("outcome")).empty() ? std::string() : csv_split(need("outcome")).front();
  d.exposure_names = csv_split(need("exposures"));
  d.confounder_names = csv_split(need("confounders"));
  if (static_cast<long>(d.exposure_names.size()) != M || static_cast<long>(d.confounder_names.size()) != P)
    throw fail("column names do not match M and P");
  const auto scale = detail::parse_doubles(need("scale"), "scale");
  if (static_cast<long>(scale.size()) != M) throw fail("scale has the wrong length");
  d.exposure_scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), M);

  auto stats = [&](const char* key) {
    const auto v = detail::parse_doubles(need(key), key);
    if (v.size() != 3) throw fail(std::string("bad field '") + key + "'");
    return BlockStats{static_cast<long>(v[1]), static_cast<long>(v[0]), static_cast<long>(v[2])};
  };
  f.samples.regression_block = stats("accept_regression");
  f.samples.frequency_block = stats("accept_frequency");
  const auto steps = detail::parse_doubles(need("final_step_sizes"), "final_step_sizes");
  if (steps.size() != 2) throw fail("bad field 'final_step_sizes'");
  f.samples.final_e_beta = steps[0];
  f.samples.final_e_omega = steps[1];

  if (!std::getline(in, line)) throw fail("truncated [data] section");
  d.Y.resize(n);
  d.X.resize(n, M);
  d.Z.resize(n, P);
  for (long i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw fail("truncated [data] section");
    const auto v = detail::parse_doubles(line, "data row " + std::to_string(i + 1));
    if (static_cast<long>(v.size()) != 1 + M + P) throw fail("data row " + std::to_string(i + 1) + " has the wrong width");
    d.Y[i] = v[0];
    for (long m = 0; m < M; ++m) d.X(i, m) = v[static_cast<std::size_t>(1 + m)];
    for (long p = 0; p < P; ++p) d.Z(i, p) = v[static_cast<std::size_t>(1 + M + p)];
  }
  if (!std::getline(in, line) || line != "[draws]") throw fail("missing [draws] section");
  if (!std::getline(in, line)) throw fail("truncated [draws] section");

  const long width = 2 + M + P + 2 * J + J * M;
  f.samples.draws.reserve(static_cast<std::size_t>(S));
  f.samples.h.resize(S, n);
  for (long s = 0; s < S; ++s) {
    if (!std::getline(in, line)) throw fail("truncated [draws] section");
    const auto v = detail::parse_doubles(line, "draw " + std::to_string(s + 1));
    if (static_cast<long>(v.size()) != width) throw fail("draw " + std::to_string(s + 1) + " has the wrong width");
    ModelState st;
    std::size_t k = 0;
    st.sigma2 = v[k++];
    st.tau2 = v[k++];
    st.theta.resize(M);
    for (long m = 0; m < M; ++m) st.theta[m] = v[k++];
    st.gamma.resize(P);
    for (long p = 0; p < P; ++p) st.gamma[p] = v[k++];
    st.amps.a.resize(J);
    st.amps.b.resize(J);
    for (long j = 0; j < J; ++j) st.amps.a[j] = v[k++];
    for (long j = 0; j < J; ++j) st.amps.b[j] = v[k++];
    st.freqs.omega.resize(J, M);
    for (long j = 0; j < J; ++j)
      for (long m = 0; m < M; ++m) st.freqs.omega(j, m) = v[k++];
    f.samples.h.row(s) = evaluate_h(d.X, st.freqs, st.amps).transpose();
    f.samples.draws.push_back(std::move(st));
  }
  if (!std::getline(in, line) || line != "[end]") throw fail("missing [end] marker");
  d.validate();
  return f;
}

inline SamplesFile read_samples(const std::filesystem::path& path) {
  return parse_samples(read_file(path), path.string());
}

}  // namespace fastbkmr
