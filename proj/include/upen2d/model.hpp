#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace upen2d {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace detail {

inline void check_time_axis(const Vector& t, const std::string& name) {
  if (t.size() < 2) throw std::invalid_argument(name + ": need at least 2 points");
  for (Index i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]) || t[i] <= 0.0)
      throw std::invalid_argument(name + ": entries must be finite and positive");
    if (i > 0 && t[i] <= t[i - 1])
      throw std::invalid_argument(name + ": entries must be strictly increasing");
  }
}

}  // namespace detail

/// Acquisition grid: t1 holds inversion-recovery delays, t2 CPMG echo
/// times, both in seconds and strictly increasing.
struct AcquisitionGrid {
  Vector t1;
  Vector t2;
  Index m1() const { return t1.size(); }
  Index m2() const { return t2.size(); }
  Index samples() const { return m1() * m2(); }
};

inline void validate(const AcquisitionGrid& g) {
  detail::check_time_axis(g.t1, "t1");
  detail::check_time_axis(g.t2, "t2");
}

/// Relaxation-time grid the distribution is sampled on (seconds).
struct RelaxationGrid {
  Vector T1;
  Vector T2;
  Index nx() const { return T1.size(); }
  Index ny() const { return T2.size(); }
  Index points() const { return nx() * ny(); }
};

inline void validate(const RelaxationGrid& g) {
  detail::check_time_axis(g.T1, "T1");
  detail::check_time_axis(g.T2, "T2");
}

/// n points from lo to hi inclusive, equally spaced in log.
inline Vector log_spaced(double lo, double hi, Index n) {
  if (n < 2 || !(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("log_spaced: bad range");
  Vector v(n);
  const double l0 = std::log(lo);
  const double step = (std::log(hi) - l0) / double(n - 1);
  for (Index i = 0; i < n; ++i) v[i] = std::exp(l0 + step * double(i));
  v[0] = lo;
  v[n - 1] = hi;
  return v;
}

inline RelaxationGrid default_relaxation_grid(Index nx, Index ny) {
  return {log_spaced(1e-3, 10.0, nx), log_spaced(1e-3, 10.0, ny)};
}

/// IR delays geometric over [1 ms, 2.8 s]; echo times are multiples of
/// a 500 us echo spacing.
inline AcquisitionGrid default_acquisition_grid(Index m1, Index m2) {
  AcquisitionGrid g;
  g.t1 = log_spaced(1e-3, 2.8, m1);
  g.t2 = 5e-4 * Vector::LinSpaced(m2, 1.0, double(m2));
  return g;
}

/// Separable kernel factors. The full model matrix is kron(K2, K1) with
/// column-major vectorization; it is never materialized.
struct KernelPair {
  Matrix K1;  // m1 x nx, inversion-recovery kernel
  Matrix K2;  // m2 x ny, CPMG decay kernel
  Index m1() const { return K1.rows(); }
  Index m2() const { return K2.rows(); }
  Index nx() const { return K1.cols(); }
  Index ny() const { return K2.cols(); }
  Index rows() const { return m1() * m2(); }
  Index cols() const { return nx() * ny(); }
};

inline Matrix build_t1_kernel(const Vector& t1, const Vector& T1) {
  Matrix k(t1.size(), T1.size());
  for (Index j = 0; j < T1.size(); ++j)
    for (Index i = 0; i < t1.size(); ++i) k(i, j) = 1.0 - 2.0 * std::exp(-t1[i] / T1[j]);
  return k;
}

inline Matrix build_t2_kernel(const Vector& t2, const Vector& T2) {
  Matrix k(t2.size(), T2.size());
  for (Index j = 0; j < T2.size(); ++j)
    for (Index i = 0; i < t2.size(); ++i) k(i, j) = std::exp(-t2[i] / T2[j]);
  return k;
}

inline KernelPair build_kernels(const AcquisitionGrid& acq, const RelaxationGrid& relax) {
  validate(acq);
  validate(relax);
  return {build_t1_kernel(acq.t1, relax.T1), build_t2_kernel(acq.t2, relax.T2)};
}

/// y = kron(K2, K1) * f computed as vec(K1 * X * K2'), X = reshape(f).
inline Vector kron_matvec(const KernelPair& kp, const Eigen::Ref<const Vector>& f) {
  if (f.size() != kp.cols()) throw std::invalid_argument("kron_matvec: length mismatch");
  const Eigen::Map<const Matrix> x(f.data(), kp.nx(), kp.ny());
  const Matrix s = kp.K1 * x * kp.K2.transpose();
  return Eigen::Map<const Vector>(s.data(), s.size());
}

/// Adjoint: kron(K2, K1)' * r computed as vec(K1' * R * K2).
inline Vector kron_rmatvec(const KernelPair& kp, const Eigen::Ref<const Vector>& r) {
  if (r.size() != kp.rows()) throw std::invalid_argument("kron_rmatvec: length mismatch");
  const Eigen::Map<const Matrix> y(r.data(), kp.m1(), kp.m2());
  const Matrix g = kp.K1.transpose() * y * kp.K2;
  return Eigen::Map<const Vector>(g.data(), g.size());
}

/// T1-T2 map, nx-by-ny. The vector form stacks columns.
struct Distribution {
  Matrix F;
  Index nx() const { return F.rows(); }
  Index ny() const { return F.cols(); }
  Index size() const { return F.size(); }
  Vector vec() const { return Eigen::Map<const Vector>(F.data(), F.size()); }
};

inline Distribution to_distribution(const Eigen::Ref<const Vector>& f, Index nx, Index ny) {
  if (f.size() != nx * ny) throw std::invalid_argument("to_distribution: length mismatch");
  Distribution d;
  d.F = Eigen::Map<const Matrix>(f.data(), nx, ny);
  return d;
}

/// Measured (or simulated) surface, m1-by-m2, row index follows t1. When
/// the noise realization is known it is kept alongside the level delta.
struct SignalData {
  Matrix S;
  Vector noise;  // empty for clean signals
  double noise_level = 0.0;
  Index m1() const { return S.rows(); }
  Index m2() const { return S.cols(); }
  Index size() const { return S.size(); }
  Vector vec() const { return Eigen::Map<const Vector>(S.data(), S.size()); }
  bool has_noise() const { return noise.size() != 0; }
  Vector clean() const { return has_noise() ? Vector(vec() - noise) : vec(); }
};

inline SignalData forward_model(const KernelPair& kp, const Distribution& dist) {
  if (dist.nx() != kp.nx() || dist.ny() != kp.ny())
    throw std::invalid_argument("forward_model: shape mismatch");
  const Vector y = kron_matvec(kp, dist.vec());
  SignalData out;
  out.S = Eigen::Map<const Matrix>(y.data(), kp.m1(), kp.m2());
  return out;
}

/// Adds delta * eta where eta is a unit-norm standard-normal draw, so the
/// perturbation has Euclidean norm exactly delta. Deterministic per seed.
inline SignalData add_noise(const SignalData& sig, double delta, std::uint64_t seed) {
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw std::invalid_argument("add_noise: noise level must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector eta(sig.size());
  for (Index i = 0; i < eta.size(); ++i) eta[i] = gauss(rng);
  const double norm = eta.norm();
  if (norm == 0.0) throw std::runtime_error("add_noise: degenerate draw");
  SignalData out;
  out.noise = (delta / norm) * eta;
  out.S = sig.S + Eigen::Map<const Matrix>(out.noise.data(), sig.m1(), sig.m2());
  out.noise_level = delta;
  return out;
}

enum class Phantom { p1, p2 };

namespace detail {

// 0 outside [lo, hi], 1 on [lo+w, hi-w], raised-cosine ramps in between.
inline double edge_ramp(double u, double lo, double hi, double w) {
  if (u <= lo || u >= hi) return 0.0;
  if (u < lo + w) return 0.5 * (1.0 - std::cos(std::numbers::pi * (u - lo) / w));
  if (u > hi - w) return 0.5 * (1.0 - std::cos(std::numbers::pi * (hi - u) / w));
  return 1.0;
}

}  // namespace detail

/// p1: two separated anisotropic Gaussian peaks in (log10 T1, log10 T2)
/// at (50 ms, 20 ms) and (0.5 s, 8 ms), relative weights 1 and 0.7; the
/// first peak is compact (sigma 0.08 decades), the second diffuse (0.225
/// decades). Contributions are cut once the exponent passes 18 so the
/// background is exactly zero.
/// p2: the same peaks plus a 0.1-weight plateau spanning one decade in
/// each direction (log10 T1 in [-2.9,-1.9], log10 T2 in [-2,-1]) with
/// raised-cosine edges of width 0.05 decades and an exactly flat interior.
inline Distribution make_phantom(Phantom kind, const RelaxationGrid& grid) {
  validate(grid);
  struct Bump {
    double cx, cy, sx, sy, amp;
  };
  // Both peaks sit inside the decay window of the default acquisition:
  // T2 beyond ~t2_max/2 is essentially unencoded by the echo train.
  // Deliberately heterogeneous widths: one compact peak and one diffuse
  // peak force any single smoothing weight into a compromise, which is
  // the regime a per-point weight is designed for.
  const Bump bumps[] = {
      {std::log10(0.05), std::log10(0.02), 0.08, 0.064, 1.0},
      {std::log10(0.50), std::log10(0.008), 0.18, 0.225, 0.7},
  };
  Matrix F = Matrix::Zero(grid.nx(), grid.ny());
  for (Index j = 0; j < grid.ny(); ++j) {
    const double y = std::log10(grid.T2[j]);
    for (Index i = 0; i < grid.nx(); ++i) {
      const double x = std::log10(grid.T1[i]);
      double v = 0.0;
      for (const Bump& b : bumps) {
        const double u = (x - b.cx) / b.sx;
        const double w = (y - b.cy) / b.sy;
        const double q = 0.5 * (u * u + w * w);
        if (q <= 18.0) v += b.amp * std::exp(-q);
      }
      if (kind == Phantom::p2)
        v += 0.1 * detail::edge_ramp(x, -2.9, -1.9, 0.05) * detail::edge_ramp(y, -2.0, -1.0, 0.05);
      F(i, j) = v;
    }
  }
  // Unit total mass: amplitudes above are relative weights. Keeps the
  // signal scale commensurate with absolute noise norms around 1e-2.
  const double total = F.sum();
  if (total > 0.0) F /= total;
  return {F};
}

}  // namespace upen2d
