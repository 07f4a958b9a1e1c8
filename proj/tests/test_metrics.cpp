#include "upen2d/metrics.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace upen2d;

TEST(RelativeError, IdentityAndScaling) {
  Vector f(3), g(3);
  f << 1.0, 2.0, 3.0;
  g << 1.0, 2.0, 3.0;
  EXPECT_EQ(relative_error(f, g), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0 * f, f), 1.0);  // |f| / |f|
  EXPECT_THROW(relative_error(f, Vector::Zero(3)), std::invalid_argument);
  EXPECT_THROW(relative_error(f, Vector::Ones(4)), std::invalid_argument);
}

TEST(ResidualNorm, MatchesDenseComputation) {
  std::mt19937 rng(3);
  const KernelPair kp = testsupport::random_kernel_pair(5, 6, 3, 4, rng);
  const Vector f = testsupport::random_vector(12, rng);
  const Vector s = testsupport::random_vector(30, rng);
  const double expected = (testsupport::dense_model_matrix(kp) * f - s).norm();
  EXPECT_NEAR(residual_norm(kp, f, s), expected, 1e-12);
  EXPECT_THROW(residual_norm(kp, f, Vector::Zero(29)), std::invalid_argument);
}

TEST(ErrorReport, FieldsAreConsistent) {
  std::mt19937 rng(5);
  const KernelPair kp = testsupport::random_kernel_pair(6, 5, 4, 3, rng);
  const Vector f = testsupport::random_vector(12, rng);
  const Vector f_true = testsupport::random_vector(12, rng, 0.1, 1.0);
  const Vector s = testsupport::random_vector(30, rng);
  const ErrorReport r = error_report(kp, f, f_true, s);
  EXPECT_EQ(r.n, 12);
  EXPECT_DOUBLE_EQ(r.err, relative_error(f, f_true));
  EXPECT_DOUBLE_EQ(r.res, residual_norm(kp, f, s));
  // chi and err measure the same distance under different normalizations
  EXPECT_NEAR(r.chi, r.err * f_true.norm() / std::sqrt(12.0), 1e-14);
}

TEST(Projections, SumsMatchManualLoops) {
  std::mt19937 rng(7);
  Distribution d;
  d.F = testsupport::random_matrix(4, 6, rng);
  const auto [p1, p2] = sum_projections(d);
  ASSERT_EQ(p1.size(), 4);
  ASSERT_EQ(p2.size(), 6);
  for (Index i = 0; i < 4; ++i) {
    double s = 0.0;
    for (Index j = 0; j < 6; ++j) s += d.F(i, j);
    EXPECT_NEAR(p1[i], s, 1e-14);
  }
  for (Index j = 0; j < 6; ++j) {
    double s = 0.0;
    for (Index i = 0; i < 4; ++i) s += d.F(i, j);
    EXPECT_NEAR(p2[j], s, 1e-14);
  }
  EXPECT_NEAR(p1.sum(), p2.sum(), 1e-12);  // both carry the full mass
}
