#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fastbkmr/error.hpp"

namespace fastbkmr {

struct Dataset {
  Eigen::VectorXd Y;  // outcome
  Eigen::MatrixXd X;  // n x M exposures
  Eigen::MatrixXd Z;  // n x P confounders (P may be 0)

  std::optional<Eigen::VectorXd> h_true;      // simulated data only
  std::optional<Eigen::VectorXd> gamma_true;  // simulated data only

  // Divisors applied to each exposure column at ingestion (all ones when the
  // exposures were not standardized). Raw x / exposure_scale[m] == X(:, m).
  Eigen::VectorXd exposure_scale;

  std::string outcome_name = "y";
  std::vector<std::string> exposure_names;
  std::vector<std::string> confounder_names;

  Eigen::Index n() const { return Y.size(); }
  Eigen::Index exposures() const { return X.cols(); }
  Eigen::Index confounders() const { return Z.cols(); }

  void validate() const {
    require_dim("dataset: exposure rows", n(), X.rows());
    require_dim("dataset: confounder rows", n(), Z.rows());
    if (h_true) require_dim("dataset: h_true length", n(), h_true->size());
    if (gamma_true) require_dim("dataset: gamma_true length", Z.cols(), gamma_true->size());
    if (exposure_scale.size() != 0) require_dim("dataset: exposure scale", X.cols(), exposure_scale.size());
  }
};

// Fills default column names and unit scale where missing.
inline void complete_metadata(Dataset& d) {
  if (d.exposure_scale.size() == 0) d.exposure_scale = Eigen::VectorXd::Ones(d.X.cols());
  if (d.exposure_names.empty())
    for (Eigen::Index m = 0; m < d.X.cols(); ++m) d.exposure_names.push_back("x" + std::to_string(m + 1));
  if (d.confounder_names.empty())
    for (Eigen::Index p = 0; p < d.Z.cols(); ++p) d.confounder_names.push_back("z" + std::to_string(p + 1));
}

// Rows [begin, begin + count) as a new dataset.
inline Dataset slice_rows(const Dataset& d, Eigen::Index begin, Eigen::Index count) {
  Dataset out;
  out.Y = d.Y.segment(begin, count);
  out.X = d.X.middleRows(begin, count);
  out.Z = d.Z.middleRows(begin, count);
  if (d.h_true) out.h_true = d.h_true->segment(begin, count);
  out.gamma_true = d.gamma_true;
  out.exposure_scale = d.exposure_scale;
  out.outcome_name = d.outcome_name;
  out.exposure_names = d.exposure_names;
  out.confounder_names = d.confounder_names;
  return out;
}

}  // namespace fastbkmr
