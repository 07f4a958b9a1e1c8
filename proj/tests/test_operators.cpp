#include "upen2d/operators.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>
#include <stdexcept>

using namespace upen2d;

TEST(Laplacian, MatchesDenseOracleSweep) {
  std::mt19937 rng(7);
  for (Index nx = 1; nx <= 10; ++nx)
    for (Index ny = 1; ny <= 10; ++ny) {
      if (nx * ny > 100) continue;
      const LaplacianOp op(nx, ny);
      const Matrix dense = testsupport::dense_laplacian(nx, ny);
      EXPECT_LT((op.dense() - dense).lpNorm<Eigen::Infinity>(), 1e-15);
      const Vector f = testsupport::random_vector(nx * ny, rng);
      EXPECT_LT((op.apply(f) - dense * f).lpNorm<Eigen::Infinity>(), 1e-12);
      EXPECT_LT((op.adjoint_apply(f) - dense.transpose() * f).lpNorm<Eigen::Infinity>(), 1e-12);
    }
}

TEST(Laplacian, AdjointInnerProductIdentity) {
  std::mt19937 rng(13);
  const LaplacianOp op(5, 4);
  for (int rep = 0; rep < 25; ++rep) {
    const Vector f = testsupport::random_vector(20, rng);
    const Vector v = testsupport::random_vector(20, rng);
    EXPECT_NEAR(op.apply(f).dot(v), f.dot(op.adjoint_apply(v)), 1e-12);
  }
}

TEST(Laplacian, AnnihilatesConstants) {
  const LaplacianOp op(6, 7);
  const Vector c = Vector::Constant(42, 3.0);
  EXPECT_EQ(op.apply(c).lpNorm<Eigen::Infinity>(), 0.0);  // exact: 4*3 - 4 neighbor clamps of 3
}

TEST(Laplacian, RejectsBadShapes) {
  EXPECT_THROW(LaplacianOp(0, 4), std::invalid_argument);
  const LaplacianOp op(3, 3);
  EXPECT_THROW(op.apply(Vector::Zero(8)), std::invalid_argument);
  EXPECT_THROW(op.adjoint_apply(Vector::Zero(10)), std::invalid_argument);
}

TEST(CurvatureMap, ReshapeConsistency) {
  std::mt19937 rng(19);
  const LaplacianOp op(4, 6);
  Distribution d;
  d.F = testsupport::random_matrix(4, 6, rng);
  const Matrix c = curvature_map(op, d);
  const Vector lf = op.apply(d.vec());
  for (Index j = 0; j < 6; ++j)
    for (Index i = 0; i < 4; ++i) EXPECT_EQ(c(i, j), lf[i + 4 * j]);
  Distribution wrong;
  wrong.F = Matrix::Zero(3, 6);
  EXPECT_THROW(curvature_map(op, wrong), std::invalid_argument);
}

TEST(GradientMap, LinearRampInterior) {
  // F(i,j) = 2 i  =>  forward column difference 2, row difference 0
  Distribution d;
  d.F.resize(5, 5);
  for (Index j = 0; j < 5; ++j)
    for (Index i = 0; i < 5; ++i) d.F(i, j) = 2.0 * static_cast<double>(i);
  const Matrix g = gradient_magnitude_map(d);
  for (Index j = 0; j < 5; ++j) {
    // the column difference is 2 everywhere except on the last row, where
    // the replicate boundary zeroes it; row differences vanish on a ramp
    for (Index i = 0; i + 1 < 5; ++i) EXPECT_DOUBLE_EQ(g(i, j), 2.0);
    EXPECT_EQ(g(4, j), 0.0);
  }
}

TEST(GradientMap, DiagonalCombinesBothAxes) {
  Distribution d;
  d.F.resize(3, 3);
  for (Index j = 0; j < 3; ++j)
    for (Index i = 0; i < 3; ++i) d.F(i, j) = static_cast<double>(i) + 2.0 * static_cast<double>(j);
  const Matrix g = gradient_magnitude_map(d);
  EXPECT_NEAR(g(0, 0), std::sqrt(5.0), 1e-15);
  EXPECT_NEAR(g(1, 1), std::sqrt(5.0), 1e-15);
}

TEST(NeighborhoodMax, HandCases) {
  Matrix field(3, 4);
  field << 1, 2, 3, 4,
           5, 6, 7, 8,
           9, 10, 11, 12;
  // interior cell sees the full 3x3 block
  EXPECT_EQ(neighborhood_max_sq(field, 1, 1), 121.0);
  // corner clamps to a 2x2 block
  EXPECT_EQ(neighborhood_max_sq(field, 0, 0), 36.0);
  EXPECT_EQ(neighborhood_max_sq(field, 2, 3), 144.0);
  // negative entries compete by square
  field(1, 1) = -100.0;
  EXPECT_EQ(neighborhood_max_sq(field, 0, 0), 10000.0);

  // linear-index overload agrees with (row, col) addressing
  EXPECT_EQ(neighborhood_max_sq(field, Index(0)), neighborhood_max_sq(field, 0, 0));
  EXPECT_EQ(neighborhood_max_sq(field, Index(4)), neighborhood_max_sq(field, 1, 1));
  EXPECT_THROW(neighborhood_max_sq(field, Index(12)), std::out_of_range);
  EXPECT_THROW(neighborhood_max_sq(field, 3, 0), std::out_of_range);
}

TEST(NeighborhoodMax, FieldMatchesPointwise) {
  std::mt19937 rng(23);
  const Matrix field = testsupport::random_matrix(6, 5, rng);
  const Matrix m = neighborhood_max_sq_field(field);
  for (Index j = 0; j < 5; ++j)
    for (Index i = 0; i < 6; ++i) EXPECT_EQ(m(i, j), neighborhood_max_sq(field, i, j));
}

TEST(CurvatureZeroThreshold, Value) {
  EXPECT_EQ(kCurvatureZeroSq, 1e-30);
}
