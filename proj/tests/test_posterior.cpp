#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fastbkmr/posterior.hpp"

using namespace fastbkmr;

namespace {

ModelState one_pair(const Eigen::RowVectorXd& omega, double a, double b, double sigma2 = 1.0) {
  ModelState s;
  s.freqs.omega = omega;
  s.amps = {Eigen::VectorXd::Constant(1, a), Eigen::VectorXd::Constant(1, b)};
  s.theta = Eigen::VectorXd::Ones(omega.size());
  s.gamma = Eigen::VectorXd(0);
  s.sigma2 = sigma2;
  return s;
}

PosteriorSamples samples_from(std::vector<ModelState> draws, const Eigen::MatrixXd& X) {
  PosteriorSamples s;
  s.draws = std::move(draws);
  s.h.resize(s.size(), X.rows());
  for (Eigen::Index k = 0; k < s.size(); ++k)
    s.h.row(k) = evaluate_h(X, s.draws[k].freqs, s.draws[k].amps).transpose();
  return s;
}

// Independent evaluation of a single-pair surface.
double hand_h(const ModelState& s, const Eigen::RowVectorXd& x) {
  double w = 0;
  for (Eigen::Index m = 0; m < x.size(); ++m) w += s.freqs.omega(0, m) * x[m];
  return s.amps.a[0] * std::cos(w) + s.amps.b[0] * std::sin(w);
}

Eigen::MatrixXd grid_data(Eigen::Index n, Eigen::Index M) {
  Eigen::MatrixXd X(n, M);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index m = 0; m < M; ++m) X(i, m) = static_cast<double>((i * (m + 3)) % n + 1) / static_cast<double>(n);
  return X;
}

std::vector<ModelState> three_draws(Eigen::Index M) {
  Eigen::RowVectorXd w1 = Eigen::RowVectorXd::Constant(M, 0.4), w2 = Eigen::RowVectorXd::Constant(M, -1.1),
                     w3 = Eigen::RowVectorXd::LinSpaced(M, 0.2, 2.0);
  return {one_pair(w1, 1.0, 0.5), one_pair(w2, -0.3, 2.0), one_pair(w3, 0.8, -1.2)};
}

void expect_zero(const EffectEstimate& e) {
  EXPECT_EQ(e.point, 0.0);
  EXPECT_EQ(e.lower, 0.0);
  EXPECT_EQ(e.upper, 0.0);
}

}  // namespace

TEST(Quantile, Type8Values) {
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9};
  EXPECT_NEAR(quantile_sorted(v, 0.75), 7.0 + 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(quantile_sorted(v, 0.25), 2.0 + 2.0 / 3.0, 1e-12);
  EXPECT_EQ(quantile_sorted(v, 0.5), 5.0);
  EXPECT_EQ(quantile_sorted(v, 0.0), 1.0);
  EXPECT_EQ(quantile_sorted(v, 1.0), 9.0);
  EXPECT_THROW(quantile_sorted({}, 0.5), DataError);
}

TEST(PredictH, TrainingRowsReproduceRecordedDrawsBitwise) {
  Rng rng(1);
  Dataset d;
  d.X = Eigen::MatrixXd(40, 2);
  for (Eigen::Index i = 0; i < d.X.size(); ++i) d.X.data()[i] = standard_normal(rng);
  d.Z = Eigen::MatrixXd::Ones(40, 1);
  d.Y = (d.X.col(0).array().sin() + 0.3 * standard_normal_vector(40, rng).array()).matrix();
  ChainConfig c;
  c.J = 6;
  c.K = 100;
  c.seed = 4;
  const PosteriorSamples s = run_chain(d, c);
  const Eigen::MatrixXd H = predict_h(s, d.X);
  EXPECT_EQ(H, s.h.transpose());
}

TEST(PredictH, ZeroAmplitudeDrawGivesZeroColumn) {
  const Eigen::MatrixXd X = grid_data(5, 2);
  auto draws = three_draws(2);
  draws[1].amps.a.setZero();
  draws[1].amps.b.setZero();
  const Eigen::MatrixXd H = predict_h(samples_from(draws, X), X);
  EXPECT_EQ(H.col(1), Eigen::VectorXd::Zero(5));
  EXPECT_NE(H.col(0), Eigen::VectorXd::Zero(5));
}

TEST(PredictH, SinglePointHandEvaluation) {
  const Eigen::MatrixXd X = grid_data(5, 2);
  const auto draws = three_draws(2);
  Eigen::RowVector2d x(0.3, -1.7);
  const Eigen::MatrixXd H = predict_h(samples_from(draws, X), x);
  ASSERT_EQ(H.rows(), 1);
  ASSERT_EQ(H.cols(), 3);
  for (int s = 0; s < 3; ++s) EXPECT_NEAR(H(0, s), hand_h(draws[s], x), 1e-14);
  EXPECT_THROW(predict_h(samples_from(draws, X), Eigen::MatrixXd::Zero(1, 3)), DimensionError);
}

TEST(OverallEffect, HandFixture) {
  Eigen::MatrixXd X(9, 2);
  for (int i = 0; i < 9; ++i) {
    X(i, 0) = i + 1;
    X(i, 1) = 0.5 * (9 - i);
  }
  const auto draws = three_draws(2);
  const PosteriorSamples s = samples_from(draws, X);
  // type-8 quartiles of 1..9 are 2+2/3 and 7+1/3; of 0.5..4.5 half of those
  const Eigen::RowVector2d p75(7.0 + 1.0 / 3.0, 0.5 * (7.0 + 1.0 / 3.0));
  const Eigen::RowVector2d p25(2.0 + 2.0 / 3.0, 0.5 * (2.0 + 2.0 / 3.0));
  Eigen::Vector3d diff;
  for (int k = 0; k < 3; ++k) diff[k] = hand_h(draws[k], p75) - hand_h(draws[k], p25);
  const EffectEstimate e = overall_effect(s, X, 75, 25);
  EXPECT_NEAR(e.point, diff.mean(), 1e-12);
  // with three draws the 2.5% and 97.5% quantiles clamp to the extremes
  EXPECT_NEAR(e.lower, diff.minCoeff(), 1e-12);
  EXPECT_NEAR(e.upper, diff.maxCoeff(), 1e-12);
  EXPECT_LE(e.lower, e.point);
  EXPECT_LE(e.point, e.upper);
}

TEST(OverallEffect, SelfContrastAndConstantSurface) {
  const Eigen::MatrixXd X = grid_data(20, 3);
  const PosteriorSamples s = samples_from(three_draws(3), X);
  expect_zero(overall_effect(s, X, 40, 40));
  auto flat = three_draws(3);
  for (auto& d : flat) {
    d.amps.a.setZero();
    d.amps.b.setZero();
  }
  expect_zero(overall_effect(samples_from(flat, X), X, 90, 10));
  EXPECT_THROW(overall_effect(s, X, 0, 25), DataError);
  EXPECT_THROW(overall_effect(s, X, 50, 100), DataError);
}

TEST(OverallEffect, Antisymmetric) {
  Rng rng(2);
  Eigen::MatrixXd X(30, 3);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = standard_normal(rng);
  std::vector<ModelState> draws;
  for (int k = 0; k < 41; ++k)
    draws.push_back(one_pair(standard_normal_vector(3, rng).transpose(), standard_normal(rng), standard_normal(rng)));
  const PosteriorSamples s = samples_from(draws, X);
  for (double p : {10.0, 35.0, 60.0, 90.0}) {
    const EffectEstimate f = overall_effect(s, X, p, 25), b = overall_effect(s, X, 25, p);
    EXPECT_EQ(f.point, -b.point);
    EXPECT_EQ(f.lower, -b.upper);
    EXPECT_EQ(f.upper, -b.lower);
  }
}

TEST(UnivariateResponse, ConstantSurfaceIsFlat) {
  const Eigen::MatrixXd X = grid_data(50, 3);
  auto flat = three_draws(3);
  for (auto& d : flat) {
    d.amps.a.setZero();
    d.amps.b.setZero();
  }
  const ResponseCurve c = univariate_response(samples_from(flat, X), X, 1, 50, 20);
  ASSERT_EQ(c.grid.size(), 20);
  for (const auto& e : c.estimates) expect_zero(e);
  for (Eigen::Index g = 1; g < c.grid.size(); ++g) EXPECT_GT(c.grid[g], c.grid[g - 1]);
}

TEST(UnivariateResponse, ReproducesNearLinearSurface) {
  const Eigen::MatrixXd X = grid_data(60, 3);
  // b sin(w x) / w with tiny w is x to within w^2 x^3 / 6
  const double w = 1e-3;
  Eigen::RowVector3d omega(0.0, w, 0.0);
  const ResponseCurve c = univariate_response(samples_from({one_pair(omega, 0.0, 1.0 / w)}, X), X, 1, 50, 25);
  for (Eigen::Index g = 0; g < c.grid.size(); ++g) {
    EXPECT_NEAR(c.estimates[g].point, c.grid[g] - c.grid[0], 1e-3);
    EXPECT_EQ(c.estimates[g].lower, c.estimates[g].upper);
  }
  EXPECT_EQ(c.fixed_profile[0], quantile(X.col(0), 0.5));
  EXPECT_EQ(c.fixed_profile[2], quantile(X.col(2), 0.5));
}

TEST(UnivariateResponse, EmptyWindowIsAnError) {
  Eigen::MatrixXd X(100, 3);
  for (int i = 0; i < 100; ++i) {
    X(i, 0) = i;
    X(i, 1) = i;
    X(i, 2) = (i + 50) % 100;  // middle of x2 pairs with the tails of x3
  }
  const PosteriorSamples s = samples_from(three_draws(3), X);
  try {
    univariate_response(s, X, 0, 50, 10);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("percentile window"), std::string::npos);
  }
  EXPECT_THROW(univariate_response(s, X, 3, 50, 10), DataError);
}

TEST(BivariateSurface, ConstantSurfaceAndReferenceCorner) {
  const Eigen::MatrixXd X = grid_data(40, 3);
  auto flat = three_draws(3);
  for (auto& d : flat) {
    d.amps.a.setZero();
    d.amps.b.setZero();
  }
  const BivariateSurface z = bivariate_surface(samples_from(flat, X), X, 0, 2, 50, 10);
  for (const auto& e : z.estimates) expect_zero(e);

  const BivariateSurface s = bivariate_surface(samples_from(three_draws(3), X), X, 0, 2, 50, 10);
  EXPECT_EQ(s.grid1[s.ref1], quantile(X.col(0), 0.25));
  EXPECT_EQ(s.grid2[s.ref2], quantile(X.col(2), 0.25));
  expect_zero(s.at(s.ref1, s.ref2));
  EXPECT_THROW(bivariate_surface(samples_from(three_draws(3), X), X, 1, 1, 50, 10), DataError);
}

TEST(BivariateSurface, AdditiveSurfaceDecomposes) {
  Rng rng(3);
  Eigen::MatrixXd X(50, 3);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = standard_normal(rng);
  // two pairs, one per exposure: h = f(x1) + g(x2)
  std::vector<ModelState> draws;
  for (int k = 0; k < 5; ++k) {
    ModelState s;
    s.freqs.omega = Eigen::MatrixXd::Zero(2, 3);
    s.freqs.omega(0, 0) = 0.5 + 0.2 * k;
    s.freqs.omega(1, 1) = 1.3 - 0.1 * k;
    s.amps = {standard_normal_vector(2, rng), standard_normal_vector(2, rng)};
    s.gamma = Eigen::VectorXd(0);
    draws.push_back(s);
  }
  const BivariateSurface s = bivariate_surface(samples_from(draws, X), X, 0, 1, 50, 12);
  for (Eigen::Index i = 0; i < s.grid1.size(); ++i)
    for (Eigen::Index j = 0; j < s.grid2.size(); ++j)
      EXPECT_NEAR(s.at(i, j).point, s.at(i, s.ref2).point + s.at(s.ref1, j).point, 1e-6);
}

TEST(Waic, IdenticalDrawsHaveNoPenalty) {
  Dataset d;
  d.X = grid_data(6, 2);
  d.Z = Eigen::MatrixXd::Zero(6, 0);
  d.Y = Eigen::VectorXd::LinSpaced(6, -1, 1);
  const auto base = three_draws(2)[0];
  const PosteriorSamples s = samples_from({base, base, base}, d.X);
  const WaicResult w = waic_components(s, d);
  EXPECT_NEAR(w.p_waic, 0.0, 1e-24);
  EXPECT_NEAR(w.waic, -2.0 * w.lppd, 1e-12);
}

TEST(Waic, TwoDrawOnePointHandFixture) {
  Dataset d;
  d.X = Eigen::MatrixXd::Zero(1, 1);
  d.Z = Eigen::MatrixXd::Ones(1, 1);
  d.Y = Eigen::VectorXd::Constant(1, 1.0);
  // with x = 0 the surface equals a; mean = gamma + a
  ModelState a = one_pair(Eigen::RowVectorXd::Constant(1, 1.0), 0.5, 0.0, 1.0);
  ModelState b = one_pair(Eigen::RowVectorXd::Constant(1, 1.0), -0.5, 0.0, 4.0);
  a.gamma = Eigen::VectorXd::Constant(1, 0.25);
  b.gamma = Eigen::VectorXd::Constant(1, 0.0);
  const PosteriorSamples s = samples_from({a, b}, d.X);
  auto logn = [](double y, double mu, double v) {
    return -0.5 * std::log(2 * std::numbers::pi * v) - 0.5 * (y - mu) * (y - mu) / v;
  };
  const double l1 = logn(1.0, 0.75, 1.0), l2 = logn(1.0, -0.5, 4.0);
  const double lppd = std::log(0.5 * (std::exp(l1) + std::exp(l2)));
  const double pw = 0.25 * (l1 - l2) * (l1 - l2);
  const WaicResult w = waic_components(s, d);
  EXPECT_NEAR(w.lppd, lppd, 1e-12);
  EXPECT_NEAR(w.p_waic, pw, 1e-12);
  EXPECT_NEAR(w.waic, -2 * (lppd - pw), 1e-12);
}

TEST(Waic, DuplicatingDrawsChangesNothing) {
  Rng rng(4);
  Dataset d;
  d.X = grid_data(12, 2);
  d.Z = Eigen::MatrixXd::Ones(12, 1);
  d.Y = standard_normal_vector(12, rng);
  std::vector<ModelState> draws;
  for (int k = 0; k < 7; ++k) {
    ModelState s = one_pair(standard_normal_vector(2, rng).transpose(), standard_normal(rng), standard_normal(rng),
                            0.5 + uniform01(rng));
    s.gamma = standard_normal_vector(1, rng);
    draws.push_back(s);
  }
  const double once = waic(samples_from(draws, d.X), d);
  auto twice = draws;
  twice.insert(twice.end(), draws.begin(), draws.end());
  EXPECT_NEAR(waic(samples_from(twice, d.X), d), once, 1e-10 * std::fabs(once));
}

TEST(Waic, TruthBeatsZeroSurface) {
  Dataset d;
  d.X = grid_data(30, 2);
  d.Z = Eigen::MatrixXd::Zero(30, 0);
  const ModelState truth = one_pair(Eigen::RowVector2d(2.0, -1.0), 1.5, -2.0, 0.01);
  d.Y = evaluate_h(d.X, truth.freqs, truth.amps);
  ModelState zero = truth;
  zero.amps.a.setZero();
  zero.amps.b.setZero();
  ModelState truth2 = truth;
  truth2.sigma2 = 0.012;
  ModelState zero2 = zero;
  zero2.sigma2 = 0.012;
  EXPECT_LT(waic(samples_from({truth, truth2}, d.X), d), waic(samples_from({zero, zero2}, d.X), d));
}

TEST(Waic, NeedsTwoDraws) {
  Dataset d;
  d.X = grid_data(3, 1);
  d.Z = Eigen::MatrixXd::Zero(3, 0);
  d.Y = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(waic(samples_from({three_draws(1)[0]}, d.X), d), DataError);
}
