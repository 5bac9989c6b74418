#include <cmath>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "fastbkmr/kernels.hpp"

using namespace fastbkmr;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

constexpr KernelKind kAllKinds[] = {KernelKind::GaussianSquared, KernelKind::SqrtAbsolute, KernelKind::Absolute};

}  // namespace

TEST(KernelValue, IdenticalPointsGiveOne) {
  Rng rng(3);
  for (KernelKind kind : kAllKinds) {
    const Eigen::VectorXd x = standard_normal_vector(4, rng);
    EXPECT_EQ(kernel_value(x, x, vec({0.3, 2.0, 0.0, 7.5}), kind), 1.0);
  }
}

TEST(KernelValue, ZeroThetaGivesOne) {
  for (KernelKind kind : kAllKinds) EXPECT_EQ(kernel_value(vec({-3, 2}), vec({5, 0.1}), vec({0, 0}), kind), 1.0);
}

TEST(KernelValue, GaussianHandValue) {
  EXPECT_NEAR(kernel_value(vec({0}), vec({1}), vec({1}), KernelKind::GaussianSquared), 0.36787944117144233, 1e-15);
}

TEST(KernelValue, KindsUseTheirDistances) {
  const auto xi = vec({0.0, 1.0}), xj = vec({4.0, 0.0}), th = vec({0.5, 2.0});
  EXPECT_NEAR(kernel_value(xi, xj, th, KernelKind::GaussianSquared), std::exp(-(0.5 * 16 + 2.0 * 1)), 1e-15);
  EXPECT_NEAR(kernel_value(xi, xj, th, KernelKind::SqrtAbsolute), std::exp(-(0.5 * 2 + 2.0 * 1)), 1e-15);
  EXPECT_NEAR(kernel_value(xi, xj, th, KernelKind::Absolute), std::exp(-(0.5 * 4 + 2.0 * 1)), 1e-15);
}

TEST(KernelValue, DimensionMismatchThrows) {
  EXPECT_THROW(kernel_value(vec({1, 2}), vec({1, 2}), vec({1}), KernelKind::GaussianSquared), DimensionError);
  try {
    kernel_value(vec({1, 2, 3}), vec({1, 2, 3}), vec({1, 1}), KernelKind::Absolute);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.expected(), 2);
    EXPECT_EQ(e.actual(), 3);
  }
}

TEST(KernelValue, SymmetricAndMonotone) {
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep)
    for (KernelKind kind : kAllKinds) {
      const Eigen::VectorXd a = standard_normal_vector(3, rng), b = standard_normal_vector(3, rng);
      const Eigen::VectorXd th = standard_normal_vector(3, rng).cwiseAbs();
      EXPECT_EQ(kernel_value(a, b, th, kind), kernel_value(b, a, th, kind));
      // push coordinate 1 of b further from a
      Eigen::VectorXd far = b;
      far[1] = a[1] + 1.5 * (b[1] - a[1]) + (b[1] >= a[1] ? 0.1 : -0.1);
      EXPECT_LE(kernel_value(a, far, th, kind), kernel_value(a, b, th, kind));
    }
}

TEST(KernelMatrix, SingleRowAndDuplicates) {
  Eigen::MatrixXd one(1, 2);
  one << 0.3, -1.0;
  const Eigen::MatrixXd K1 = kernel_matrix(one, vec({1, 1}), KernelKind::GaussianSquared);
  ASSERT_EQ(K1.rows(), 1);
  EXPECT_EQ(K1(0, 0), 1.0);

  Eigen::MatrixXd two(2, 2);
  two << 0.3, -1.0, 0.3, -1.0;
  EXPECT_EQ(kernel_matrix(two, vec({4, 9}), KernelKind::Absolute), Eigen::MatrixXd::Ones(2, 2));
}

TEST(KernelMatrix, MatchesPairwiseValuesAndIsSymmetric) {
  Rng rng(5);
  Eigen::MatrixXd X(6, 3);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = standard_normal(rng);
  const auto th = vec({0.2, 1.0, 3.0});
  for (KernelKind kind : kAllKinds) {
    const Eigen::MatrixXd K = kernel_matrix(X, th, kind);
    for (int i = 0; i < 6; ++i) {
      EXPECT_EQ(K(i, i), 1.0);
      for (int j = 0; j < 6; ++j) {
        EXPECT_EQ(K(i, j), K(j, i));
        if (i != j) {
          double s = 0;
          for (int m = 0; m < 3; ++m) {
            const double d = X(i, m) - X(j, m);
            s += th[m] * (kind == KernelKind::GaussianSquared ? d * d
                          : kind == KernelKind::SqrtAbsolute  ? std::sqrt(std::fabs(d))
                                                              : std::fabs(d));
          }
          EXPECT_NEAR(K(i, j), std::exp(-s), 1e-14);
        }
      }
    }
  }
}

TEST(KernelMatrix, GaussianIsPositiveSemidefinite) {
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::Index n = 3 + rep * 47 / 19;  // 3 .. 50
    Eigen::MatrixXd X(n, 2);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = standard_normal(rng);
    const Eigen::VectorXd th = standard_normal_vector(2, rng).cwiseAbs() + vec({0.01, 0.01});
    const Eigen::MatrixXd K = kernel_matrix(X, th, KernelKind::GaussianSquared);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8) << "n = " << n;
  }
}

TEST(JitteredCholesky, ExactWhenPositiveDefinite) {
  Eigen::MatrixXd A(2, 2);
  A << 4, 2, 2, 3;
  const auto c = jittered_cholesky(A, "test");
  EXPECT_EQ(c.jitter, 0.0);
  EXPECT_LT((c.lower * c.lower.transpose() - A).norm(), 1e-14);
}

TEST(JitteredCholesky, SingularMatrixGetsSmallJitter) {
  const Eigen::MatrixXd A = Eigen::MatrixXd::Ones(4, 4);
  const auto c = jittered_cholesky(A, "test");
  EXPECT_GT(c.jitter, 0.0);
  EXPECT_LE(c.jitter, 1e-4);
}

TEST(JitteredCholesky, IndefiniteMatrixReportsFinalJitter) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(3, 3);
  A(2, 2) = -1.0;
  try {
    jittered_cholesky(A, "ctx");
    FAIL();
  } catch (const FactorizationError& e) {
    EXPECT_NEAR(e.final_jitter(), 1e-4 / 3.0, 1e-12);
    EXPECT_NE(std::string(e.what()).find("ctx"), std::string::npos);
  }
}

TEST(SampleGp, ZeroVarianceGivesZeros) {
  Rng rng(1);
  EXPECT_EQ(sample_gp(Eigen::MatrixXd::Identity(5, 5), 0.0, rng), Eigen::VectorXd::Zero(5));
}

TEST(SampleGp, DeterministicGivenSeed) {
  const Eigen::MatrixXd K = Eigen::MatrixXd::Constant(4, 4, 0.5) + 0.5 * Eigen::MatrixXd::Identity(4, 4);
  Rng a(99), b(99);
  EXPECT_EQ(sample_gp(K, 2.0, a), sample_gp(K, 2.0, b));
}

TEST(SampleGp, IdentityVariances) {
  Rng rng(2024);
  const int N = 10000;
  Eigen::Vector3d ss = Eigen::Vector3d::Zero();
  for (int r = 0; r < N; ++r) ss += sample_gp(Eigen::MatrixXd::Identity(3, 3), 1.0, rng).array().square().matrix();
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(ss[i] / N, 1.0, 0.05);
}

TEST(SampleGp, CorrelatedPairs) {
  Rng rng(7);
  Eigen::MatrixXd K = Eigen::MatrixXd::Constant(3, 3, 0.9);
  K.diagonal().setOnes();
  const int N = 10000;
  Eigen::MatrixXd draws(N, 3);
  for (int r = 0; r < N; ++r) draws.row(r) = sample_gp(K, 1.0, rng).transpose();
  const Eigen::MatrixXd c = draws.rowwise() - draws.colwise().mean();
  const Eigen::MatrixXd cov = c.transpose() * c / (N - 1);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < i; ++j) EXPECT_NEAR(cov(i, j) / std::sqrt(cov(i, i) * cov(j, j)), 0.9, 0.02);
}

TEST(SampleGp, EmpiricalCovarianceWithinThreeStandardErrors) {
  Rng rng(31);
  Eigen::MatrixXd X(4, 1);
  X << 0.0, 0.4, 1.0, 2.5;
  const double tau2 = 2.0;
  const Eigen::MatrixXd K = kernel_matrix(X, vec({0.7}), KernelKind::GaussianSquared);
  const int N = 20000;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(4, 4), sum2 = Eigen::MatrixXd::Zero(4, 4);
  for (int r = 0; r < N; ++r) {
    const Eigen::VectorXd h = sample_gp(K, tau2, rng);
    const Eigen::MatrixXd outer = h * h.transpose();
    sum += outer;
    sum2 += outer.array().square().matrix();
  }
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double mean = sum(i, j) / N;
      const double se = std::sqrt((sum2(i, j) / N - mean * mean) / N);
      EXPECT_NEAR(mean, tau2 * K(i, j), 3.0 * se + 1e-12) << i << "," << j;
    }
}

TEST(KernelKindNames, RoundTrip) {
  for (KernelKind kind : kAllKinds) EXPECT_EQ(parse_kernel_kind(to_string(kind)), kind);
  EXPECT_THROW(parse_kernel_kind("matern"), ConfigError);
}
