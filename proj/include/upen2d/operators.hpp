#pragma once

#include "upen2d/model.hpp"

namespace upen2d {

/// Squared curvature values at or below this threshold count as exact
/// zeros when curvature terms are enumerated.
inline constexpr double kCurvatureZeroSq = 1e-30;

/// Five-point Laplacian stencil (+4 center, -1 cross neighbours, unit
/// spacing) on an nx-by-ny field, out-of-range neighbours replicated from
/// the boundary. Annihilates constants.
class LaplacianOp {
 public:
  LaplacianOp(Index nx, Index ny) : nx_(nx), ny_(ny) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("LaplacianOp: empty shape");
  }
  Index nx() const { return nx_; }
  Index ny() const { return ny_; }
  Index size() const { return nx_ * ny_; }

  Vector apply(const Eigen::Ref<const Vector>& f) const {
    check(f.size());
    const Eigen::Map<const Matrix> x(f.data(), nx_, ny_);
    Vector out(size());
    Eigen::Map<Matrix> y(out.data(), nx_, ny_);
    for (Index j = 0; j < ny_; ++j) {
      const Index jd = j > 0 ? j - 1 : 0;
      const Index ju = j + 1 < ny_ ? j + 1 : ny_ - 1;
      for (Index i = 0; i < nx_; ++i) {
        const Index id = i > 0 ? i - 1 : 0;
        const Index iu = i + 1 < nx_ ? i + 1 : nx_ - 1;
        y(i, j) = 4.0 * x(i, j) - x(id, j) - x(iu, j) - x(i, jd) - x(i, ju);
      }
    }
    return out;
  }

  /// Transposed stencil, assembled in scatter form so it is the exact
  /// adjoint of apply() whatever the boundary handling does.
  Vector adjoint_apply(const Eigen::Ref<const Vector>& v) const {
    check(v.size());
    const Eigen::Map<const Matrix> x(v.data(), nx_, ny_);
    Vector out = Vector::Zero(size());
    Eigen::Map<Matrix> y(out.data(), nx_, ny_);
    for (Index j = 0; j < ny_; ++j) {
      const Index jd = j > 0 ? j - 1 : 0;
      const Index ju = j + 1 < ny_ ? j + 1 : ny_ - 1;
      for (Index i = 0; i < nx_; ++i) {
        const Index id = i > 0 ? i - 1 : 0;
        const Index iu = i + 1 < nx_ ? i + 1 : nx_ - 1;
        const double c = x(i, j);
        y(i, j) += 4.0 * c;
        y(id, j) -= c;
        y(iu, j) -= c;
        y(i, jd) -= c;
        y(i, ju) -= c;
      }
    }
    return out;
  }

  Matrix dense() const {
    Matrix m = Matrix::Zero(size(), size());
    for (Index j = 0; j < ny_; ++j) {
      const Index jd = j > 0 ? j - 1 : 0;
      const Index ju = j + 1 < ny_ ? j + 1 : ny_ - 1;
      for (Index i = 0; i < nx_; ++i) {
        const Index id = i > 0 ? i - 1 : 0;
        const Index iu = i + 1 < nx_ ? i + 1 : nx_ - 1;
        const Index a = i + nx_ * j;
        m(a, a) += 4.0;
        m(a, id + nx_ * j) -= 1.0;
        m(a, iu + nx_ * j) -= 1.0;
        m(a, i + nx_ * jd) -= 1.0;
        m(a, i + nx_ * ju) -= 1.0;
      }
    }
    return m;
  }

 private:
  void check(Index n) const {
    if (n != size()) throw std::invalid_argument("LaplacianOp: length mismatch");
  }
  Index nx_;
  Index ny_;
};

/// Curvature field C = reshape(L f); stacking its columns recovers L f.
inline Matrix curvature_map(const LaplacianOp& op, const Distribution& dist) {
  if (op.nx() != dist.nx() || op.ny() != dist.ny())
    throw std::invalid_argument("curvature_map: shape mismatch");
  const Vector lf = op.apply(dist.vec());
  return Eigen::Map<const Matrix>(lf.data(), dist.nx(), dist.ny());
}

/// Gradient magnitude from forward differences; the difference is zero on
/// the last row/column (replicate boundary).
inline Matrix gradient_magnitude_map(const Distribution& dist) {
  const Matrix& F = dist.F;
  Matrix P(F.rows(), F.cols());
  for (Index j = 0; j < F.cols(); ++j)
    for (Index i = 0; i < F.rows(); ++i) {
      const double dx = i + 1 < F.rows() ? F(i + 1, j) - F(i, j) : 0.0;
      const double dy = j + 1 < F.cols() ? F(i, j + 1) - F(i, j) : 0.0;
      P(i, j) = std::sqrt(dx * dx + dy * dy);
    }
  return P;
}

/// Maximum squared entry over the 3x3 window centered at (j, k), clipped
/// at the boundaries.
inline double neighborhood_max_sq(const Matrix& field, Index j, Index k) {
  if (j < 0 || j >= field.rows() || k < 0 || k >= field.cols())
    throw std::out_of_range("neighborhood_max_sq: index out of range");
  double m = 0.0;
  const Index j1 = std::min(field.rows() - 1, j + 1);
  const Index k1 = std::min(field.cols() - 1, k + 1);
  for (Index c = k > 0 ? k - 1 : 0; c <= k1; ++c)
    for (Index r = j > 0 ? j - 1 : 0; r <= j1; ++r) m = std::max(m, field(r, c) * field(r, c));
  return m;
}

/// Same, addressed by column-major linear index.
inline double neighborhood_max_sq(const Matrix& field, Index i) {
  if (i < 0 || i >= field.size()) throw std::out_of_range("neighborhood_max_sq: index out of range");
  return neighborhood_max_sq(field, i % field.rows(), i / field.rows());
}

/// Full-field 3x3 sliding maximum of squared entries.
inline Matrix neighborhood_max_sq_field(const Matrix& field) {
  Matrix out(field.rows(), field.cols());
  for (Index k = 0; k < field.cols(); ++k)
    for (Index j = 0; j < field.rows(); ++j) out(j, k) = neighborhood_max_sq(field, j, k);
  return out;
}

}  // namespace upen2d
