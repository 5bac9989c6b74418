#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fastbkmr/simulation.hpp"

using namespace fastbkmr;

namespace {

double column_sd(const Eigen::MatrixXd& X, Eigen::Index m) {
  const double mean = X.col(m).mean();
  return std::sqrt((X.col(m).array() - mean).square().sum() / static_cast<double>(X.rows() - 1));
}

}  // namespace

TEST(GenerateExposures, ColumnScales) {
  Rng rng(1);
  const Eigen::MatrixXd X = generate_exposures(100000, 10, rng);
  EXPECT_NEAR(column_sd(X, 0), 0.9, 0.02 * 0.9);
  EXPECT_NEAR(column_sd(X, 5), 0.1, 0.02 * 0.1);
  for (Eigen::Index m = 0; m < 10; ++m) EXPECT_NEAR(column_sd(X, m), kExposureSd[m], 0.02 * kExposureSd[m]);
}

TEST(GenerateExposures, DeterministicAndBounded) {
  Rng a(5), b(5);
  EXPECT_EQ(generate_exposures(50, 3, a), generate_exposures(50, 3, b));
  EXPECT_THROW(generate_exposures(10, 11, a), DataError);
}

TEST(GenerateConfounders, Distributions) {
  Rng rng(2);
  const Eigen::MatrixXd Z = generate_confounders(100000, rng);
  ASSERT_EQ(Z.cols(), 5);
  EXPECT_NEAR(Z.col(1).mean(), 0.7, 0.01);
  EXPECT_TRUE((Z.col(1).array() == 0.0 || Z.col(1).array() == 1.0).all());
  EXPECT_TRUE((Z.col(4).array() == 0.0 || Z.col(4).array() == 1.0).all());
  EXPECT_NEAR(Z.col(4).mean(), 0.3, 0.01);
  EXPECT_NEAR(Z.col(0).mean(), 3.0, 0.1);
  EXPECT_NEAR(column_sd(Z, 0), 6.0, 0.12);
  EXPECT_NEAR(Z.col(2).mean(), 2.0, 0.01);
  EXPECT_NEAR(column_sd(Z, 2), 0.5, 0.01);
  EXPECT_NEAR(column_sd(Z, 3), 5.0, 0.1);
  Rng a(3), b(3);
  EXPECT_EQ(generate_confounders(20, a), generate_confounders(20, b));
}

TEST(FriedmanH, HandValues) {
  Eigen::MatrixXd X(3, 6);
  X << 0, 0, 0.5, 0, 0, 9,  //
      1, std::numbers::pi / 2, 0.5, 1, 1, -4,  //
      0, 0, 1.5, 0, 0, 0;
  const Eigen::VectorXd h = friedman_h(X);
  EXPECT_DOUBLE_EQ(h[0], -10.0);
  EXPECT_DOUBLE_EQ(h[1], -5.0);
  EXPECT_DOUBLE_EQ(h[2], -6.0);
  EXPECT_THROW(friedman_h(Eigen::MatrixXd::Zero(2, 4)), DataError);
}

TEST(CalibrateTheta, StrongBandReachableWithFiveExposures) {
  Rng rng(4);
  const Eigen::MatrixXd X = generate_exposures(400, 5, rng);
  const Calibration c = calibrate_theta(X, Correlation::Strong, KernelKind::GaussianSquared);
  EXPECT_TRUE(c.within_band);
  EXPECT_GE(c.q25, 0.75 - 1e-12);
  EXPECT_LE(c.q75, 0.9 + 1e-12);
  // independent check of the quartiles from the kernel matrix itself
  const Eigen::MatrixXd K = kernel_matrix(X, c.theta, KernelKind::GaussianSquared);
  std::vector<double> off;
  for (Eigen::Index i = 0; i < K.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j) off.push_back(K(i, j));
  std::sort(off.begin(), off.end());
  EXPECT_NEAR(quantile_sorted(off, 0.25), c.q25, 1e-12);
  EXPECT_NEAR(quantile_sorted(off, 0.75), c.q75, 1e-12);
}

TEST(CalibrateTheta, WeakBandReachableWithTenExposures) {
  Rng rng(5);
  const Eigen::MatrixXd X = generate_exposures(400, 10, rng);
  const Calibration c = calibrate_theta(X, Correlation::Weak, KernelKind::GaussianSquared);
  EXPECT_TRUE(c.within_band);
  EXPECT_GE(c.q25, 0.1 - 1e-12);
  EXPECT_LE(c.q75, 0.3 + 1e-12);
}

// With two exposures the pair-distance spread is too wide for either band:
// strict mode reports the best achieved range, best-effort returns it.
TEST(CalibrateTheta, TwoExposuresFallBack) {
  Rng rng(6);
  const Eigen::MatrixXd X = generate_exposures(400, 2, rng);
  try {
    calibrate_theta(X, Correlation::Strong, KernelKind::GaussianSquared);
    FAIL();
  } catch (const CalibrationError& e) {
    EXPECT_LT(e.achieved_q25(), 0.75);
    EXPECT_GT(e.achieved_q75(), 0.9);
  }
  const Calibration c = calibrate_theta(X, Correlation::Strong, KernelKind::GaussianSquared, CalibrationMode::BestEffort);
  EXPECT_FALSE(c.within_band);
  EXPECT_GT(c.median, 0.75);
  EXPECT_LT(c.median, 0.9);
}

TEST(CalibrateTheta, MedianDecreasesWithMultiplier) {
  Rng rng(7);
  const Eigen::MatrixXd X = generate_exposures(200, 3, rng);
  const PairDistanceProfile p(X, default_theta0(X), KernelKind::GaussianSquared);
  double prev = 2.0;
  for (double c = 1e-3; c < 1e3; c *= 1.7) {
    const double med = p.kernel_quantile(c, 0.5);
    EXPECT_LE(med, prev);
    prev = med;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(GenerateDataset, HoldoutSizes) {
  SimulationSpec spec;
  spec.n = 200;
  const SimulatedData none = generate_dataset(spec);
  EXPECT_FALSE(none.test.has_value());
  EXPECT_EQ(none.train.n(), 200);
  spec.holdout_fraction = 0.5;
  const SimulatedData half = generate_dataset(spec);
  ASSERT_TRUE(half.test.has_value());
  EXPECT_EQ(half.train.n(), 200);
  EXPECT_EQ(half.test->n(), 100);
  spec.holdout_fraction = 0.2;
  EXPECT_EQ(generate_dataset(spec).test->n(), 40);
}

TEST(GenerateDataset, DeterministicPerReplicate) {
  SimulationSpec spec;
  spec.n = 60;
  const SimulatedData a = generate_dataset(spec, 3), b = generate_dataset(spec, 3), c = generate_dataset(spec, 4);
  EXPECT_EQ(a.train.Y, b.train.Y);
  EXPECT_EQ(a.train.X, b.train.X);
  EXPECT_EQ(*a.train.h_true, *b.train.h_true);
  EXPECT_NE(a.train.Y, c.train.Y);
  EXPECT_EQ(*a.train.gamma_true, default_simulation_gamma());
}

TEST(GenerateDataset, NoiseVarianceMatchesConfig) {
  SimulationSpec spec;
  spec.n = 50000;
  spec.M = 5;
  spec.h_source = SurfaceSource::Friedman;
  spec.sigma2 = 2.5;
  const SimulatedData sim = generate_dataset(spec);
  const Dataset& d = sim.train;
  const Eigen::VectorXd e = d.Y - d.Z * spec.gamma - *d.h_true;
  const double var = (e.array() - e.mean()).square().sum() / static_cast<double>(e.size() - 1);
  EXPECT_NEAR(var, 2.5, 0.05 * 2.5);
  EXPECT_EQ(*d.h_true, friedman_h(d.X));
}

TEST(GenerateDataset, ZeroEstimatorRmseIsAboutTau) {
  for (Correlation corr : {Correlation::Strong, Correlation::Weak}) {
    SimulationSpec spec;
    spec.n = 200;
    spec.correlation = corr;
    spec.tau2 = 2.0;
    double ms = 0;
    const int R = 40;
    for (int r = 0; r < R; ++r) {
      const Eigen::VectorXd h = *generate_dataset(spec, r).train.h_true;
      const double e = rmse(Eigen::VectorXd::Zero(h.size()), h);
      ms += e * e;
    }
    EXPECT_NEAR(std::sqrt(ms / R), std::sqrt(2.0), 0.15 * std::sqrt(2.0)) << to_string(corr);
  }
}

TEST(GenerateDataset, InvalidSpecs) {
  SimulationSpec spec;
  spec.h_source = SurfaceSource::Friedman;
  EXPECT_THROW(generate_dataset(spec), ConfigError);
  spec = SimulationSpec{};
  spec.M = 11;
  EXPECT_THROW(generate_dataset(spec), ConfigError);
  spec = SimulationSpec{};
  spec.holdout_fraction = 1.0;
  EXPECT_THROW(generate_dataset(spec), ConfigError);
}

TEST(RunExperiment, SmokeRow) {
  SimulationSpec spec;
  spec.n = 200;
  spec.replicates = 1;
  ModelConfig model;
  model.J = 5;
  model.K = 200;
  const auto rows = run_experiment({spec}, {model}, {.oracle = true, .threads = 1});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].error.empty()) << rows[0].error;
  EXPECT_TRUE(std::isfinite(rows[0].rmse_in));
  EXPECT_TRUE(std::isfinite(rows[0].rmse_oracle));
  EXPECT_TRUE(std::isnan(rows[0].rmse_out));
  EXPECT_GT(rows[0].seconds, 0.0);
  EXPECT_EQ(rows[0].J, 5);
}

TEST(RunExperiment, ThreadCountDoesNotChangeResults) {
  SimulationSpec spec;
  spec.n = 80;
  spec.replicates = 3;
  spec.holdout_fraction = 0.3;
  ModelConfig a, b;
  a.J = 3;
  a.K = 40;
  b.J = 6;
  b.K = 40;
  const auto serial = run_experiment({spec}, {a, b}, {.threads = 1});
  const auto parallel = run_experiment({spec}, {a, b}, {.threads = 4});
  ASSERT_EQ(serial.size(), 6u);
  ASSERT_EQ(parallel.size(), 6u);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].config_index, parallel[i].config_index);
    EXPECT_EQ(serial[i].replicate, parallel[i].replicate);
    EXPECT_EQ(serial[i].rmse_in, parallel[i].rmse_in);
    EXPECT_EQ(serial[i].rmse_out, parallel[i].rmse_out);
    EXPECT_EQ(serial[i].accept_omega, parallel[i].accept_omega);
  }
  EXPECT_EQ(serial[0].config_index, 0u);
  EXPECT_EQ(serial[3].config_index, 1u);
  EXPECT_EQ(serial[2].replicate, 2);
}

TEST(RunExperiment, FailuresAreRecordedPerRow) {
  SimulationSpec spec;
  spec.n = 40;
  spec.replicates = 2;
  ModelConfig bad, good;
  bad.K = 7;  // odd K
  good.J = 2;
  good.K = 10;
  const auto rows = run_experiment({spec}, {bad, good}, {.threads = 1});
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_FALSE(rows[0].error.empty());
  EXPECT_FALSE(rows[1].error.empty());
  EXPECT_TRUE(rows[2].error.empty());
  EXPECT_TRUE(std::isfinite(rows[3].rmse_in));
}
