#pragma once

#include "upen2d/model.hpp"

#include <utility>

namespace upen2d {

/// |f - f_true| / |f_true|.
inline double relative_error(const Eigen::Ref<const Vector>& f,
                             const Eigen::Ref<const Vector>& f_true) {
  if (f.size() != f_true.size()) throw std::invalid_argument("relative_error: length mismatch");
  const double ref = f_true.norm();
  if (ref == 0.0) throw std::invalid_argument("relative_error: zero reference");
  return (f - f_true).norm() / ref;
}

inline double residual_norm(const KernelPair& kp, const Eigen::Ref<const Vector>& f,
                            const Eigen::Ref<const Vector>& s) {
  if (s.size() != kp.rows()) throw std::invalid_argument("residual_norm: data length mismatch");
  return (kron_matvec(kp, f) - s).norm();
}

struct ErrorReport {
  double err = 0.0;  // relative error
  double res = 0.0;  // residual norm
  double chi = 0.0;  // |f - f_true| / sqrt(N)
  Index n = 0;
};

inline ErrorReport error_report(const KernelPair& kp, const Eigen::Ref<const Vector>& f,
                                const Eigen::Ref<const Vector>& f_true,
                                const Eigen::Ref<const Vector>& s) {
  ErrorReport r;
  r.n = f.size();
  r.err = relative_error(f, f_true);
  r.res = residual_norm(kp, f, s);
  r.chi = (f - f_true).norm() / std::sqrt(double(r.n));
  return r;
}

/// Projections onto the T1 axis (row sums) and the T2 axis (column sums).
inline std::pair<Vector, Vector> sum_projections(const Distribution& d) {
  return {d.F.rowwise().sum(), d.F.colwise().sum().transpose()};
}

}  // namespace upen2d
