#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unistd.h>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "fastbkmr/dataset.hpp"
#include "fastbkmr/error.hpp"

namespace fastbkmr {

// ---------------------------------------------------------------------------
// Numbers

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Whole-field parse; nullopt on any trailing junk.
inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

template <class Int>
std::optional<Int> parse_integer(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Missing-value markers: empty, NA, NaN (any case).
inline bool is_missing(std::string_view s) {
  s = trim(s);
  if (s.empty()) return true;
  std::string low(s);
  std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return low == "na" || low == "nan";
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180: quoted fields, doubled quotes, newlines inside quotes)

class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  // Next record; false at end of input. line() is the physical line the
  // record started on.
  bool next(std::vector<std::string>& fields) {
    fields.clear();
    int c = in_.get();
    if (c == EOF) return false;
    start_line_ = line_ + 1;
    std::string cur;
    bool quoted = false, was_quoted = false;
    for (;; c = in_.get()) {
      if (quoted) {
        if (c == EOF) throw DataError("csv: unterminated quote in record starting on line " + std::to_string(start_line_));
        if (c == '"') {
          if (in_.peek() == '"') {
            in_.get();
            cur.push_back('"');
          } else {
            quoted = false;
          }
        } else {
          if (c == '\n') ++line_;
          cur.push_back(static_cast<char>(c));
        }
        continue;
      }
      if (c == EOF || c == '\n') {
        ++line_;
        if (!was_quoted && !cur.empty() && cur.back() == '\r') cur.pop_back();
        fields.push_back(std::move(cur));
        return true;
      }
      if (c == ',') {
        fields.push_back(std::move(cur));
        cur.clear();
        was_quoted = false;
      } else if (c == '"' && trim(cur).empty()) {
        cur.clear();
        quoted = true;
        was_quoted = true;
      } else if (c == '\r' && in_.peek() == '\n') {
        // CRLF; the '\n' ends the record next time round
      } else {
        cur.push_back(static_cast<char>(c));
      }
    }
  }

  long line() const { return start_line_; }

 private:
  std::istream& in_;
  long line_ = 0;
  long start_line_ = 0;
};

inline std::vector<std::vector<std::string>> parse_csv_text(const std::string& text) {
  std::istringstream in(text);
  CsvReader reader(in);
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> rec;
  while (reader.next(rec)) out.push_back(rec);
  return out;
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos && trim(s) == s) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string csv_join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += csv_escape(fields[i]);
  }
  return out;
}

inline std::vector<std::string> csv_split(const std::string& line) {
  if (line.empty()) return {};
  auto recs = parse_csv_text(line);
  return recs.empty() ? std::vector<std::string>{} : recs.front();
}

// ---------------------------------------------------------------------------
// Files

// Writes via a temporary in the destination directory, then renames over the
// target, so readers see either the old file or the complete new one.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  if (!fs::exists(dir, ec)) throw DataError("cannot write " + path.string() + ": directory does not exist");
  const fs::path tmp = dir / ("." + path.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp, ec);
      throw DataError("write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignore;
    fs::remove(tmp, ignore);
    throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Dataset ingestion

struct ColumnSpec {
  std::string outcome;
  std::vector<std::string> exposures;
  std::vector<std::string> confounders;

  void validate() const {
    if (outcome.empty()) throw ConfigError("column spec: no outcome column given");
    if (exposures.empty()) throw ConfigError("column spec: at least one exposure column is required");
    std::vector<std::string> all{outcome};
    all.insert(all.end(), exposures.begin(), exposures.end());
    all.insert(all.end(), confounders.begin(), confounders.end());
    std::vector<std::string> sorted = all;
    std::sort(sorted.begin(), sorted.end());
    const auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end()) throw ConfigError("column spec: column '" + *dup + "' is listed more than once");
  }
};

struct IngestReport {
  Dataset data;
  long rows_read = 0;
  long rows_dropped = 0;  // rows with a missing value in a selected column
};

namespace detail {

inline std::vector<Eigen::Index> locate_columns(const std::vector<std::string>& header,
                                                const std::vector<std::string>& wanted, const std::string& source) {
  std::unordered_map<std::string, Eigen::Index> pos;
  std::vector<std::string> dups;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name(trim(header[i]));
    if (!pos.emplace(name, static_cast<Eigen::Index>(i)).second) dups.push_back(name);
  }
  std::vector<Eigen::Index> idx;
  for (const auto& w : wanted) {
    auto it = pos.find(w);
    if (it == pos.end()) throw DataError(source + ": column '" + w + "' not found in header");
    if (std::find(dups.begin(), dups.end(), w) != dups.end())
      throw DataError(source + ": column '" + w + "' appears more than once in header");
    idx.push_back(it->second);
  }
  return idx;
}

// Reads the selected columns. Rows with any missing selected value are
// dropped; the original 1-based data row numbers of kept rows are returned.
inline Eigen::MatrixXd read_numeric_columns(const std::filesystem::path& path, const std::vector<std::string>& names,
                                            std::vector<long>& kept_rows, long& rows_read) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  CsvReader reader(in);
  std::vector<std::string> rec;
  if (!reader.next(rec)) throw DataError(path.string() + ": empty file (a header row is required)");
  const auto idx = locate_columns(rec, names, path.string());

  std::vector<double> values;
  kept_rows.clear();
  rows_read = 0;
  while (reader.next(rec)) {
    if (rec.size() == 1 && trim(rec[0]).empty()) continue;  // blank line
    ++rows_read;
    bool missing = false;
    std::vector<double> row(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t c = static_cast<std::size_t>(idx[k]);
      if (c >= rec.size() || is_missing(rec[c])) {
        missing = true;
        continue;
      }
      const auto v = parse_double(rec[c]);
      if (!v || !std::isfinite(*v))
        throw DataError(path.string() + ": line " + std::to_string(reader.line()) + ", column '" + names[k] +
                        "': non-numeric value '" + rec[c] + "'");
      row[k] = *v;
    }
    if (missing) continue;
    values.insert(values.end(), row.begin(), row.end());
    kept_rows.push_back(rows_read);
  }
  const Eigen::Index n = static_cast<Eigen::Index>(kept_rows.size());
  const Eigen::Index p = static_cast<Eigen::Index>(names.size());
  Eigen::MatrixXd out(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) out(i, j) = values[static_cast<std::size_t>(i * p + j)];
  return out;
}

}  // namespace detail

// Standardization divides each exposure by its sample SD without centering.
inline IngestReport ingest_csv(const std::filesystem::path& path, const ColumnSpec& cols, bool standardize) {
  cols.validate();
  std::vector<std::string> names{cols.outcome};
  names.insert(names.end(), cols.exposures.begin(), cols.exposures.end());
  names.insert(names.end(), cols.confounders.begin(), cols.confounders.end());

  IngestReport rep;
  std::vector<long> kept;
  const Eigen::MatrixXd all = detail::read_numeric_columns(path, names, kept, rep.rows_read);
  rep.rows_dropped = rep.rows_read - static_cast<long>(kept.size());
  const Eigen::Index n = all.rows(), M = static_cast<Eigen::Index>(cols.exposures.size());
  if (n == 0) throw DataError(path.string() + ": no complete rows remain after dropping missing values");

  Dataset& d = rep.data;
  d.Y = all.col(0);
  d.X = all.middleCols(1, M);
  d.Z = all.rightCols(static_cast<Eigen::Index>(cols.confounders.size()));
  d.outcome_name = cols.outcome;
  d.exposure_names = cols.exposures;
  d.confounder_names = cols.confounders;
  d.exposure_scale = Eigen::VectorXd::Ones(M);
  if (standardize) {
    if (n < 2) throw DataError(path.string() + ": standardizing needs at least two complete rows");
    for (Eigen::Index m = 0; m < M; ++m) {
      const double mean = d.X.col(m).mean();
      const double sd = std::sqrt((d.X.col(m).array() - mean).square().sum() / static_cast<double>(n - 1));
      if (!(sd > 0.0)) throw DataError(path.string() + ": exposure '" + cols.exposures[m] + "' has zero variance");
      d.exposure_scale[m] = sd;
      d.X.col(m) /= sd;
    }
  }
  d.validate();
  return rep;
}

// Exposure columns of a prediction file, divided by the stored training
// scale. kept_rows gets the 1-based data row of every returned row.
inline Eigen::MatrixXd ingest_exposures(const std::filesystem::path& path, const std::vector<std::string>& names,
                                        const Eigen::VectorXd& scale, std::vector<long>& kept_rows,
                                        long& rows_read) {
  require_dim("ingest_exposures: scale length", static_cast<long>(names.size()), scale.size());
  Eigen::MatrixXd X = detail::read_numeric_columns(path, names, kept_rows, rows_read);
  for (Eigen::Index m = 0; m < X.cols(); ++m) X.col(m) /= scale[m];
  return X;
}

}  // namespace fastbkmr
