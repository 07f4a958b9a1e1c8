#pragma once

#include "upen2d/metrics.hpp"
#include "upen2d/solvers.hpp"

#include <algorithm>

namespace upen2d {

/// Per-point regularization weights, one per distribution cell, stored in
/// the same column-major order as the distribution vector.
struct RegularizationField {
  Vector lambda;
  Index nx = 0;
  Index ny = 0;
  Matrix matrix() const { return Eigen::Map<const Matrix>(lambda.data(), nx, ny); }
};

enum class ConstraintMode { nonneg, lower_bound, unconstrained };

struct UpenConfig {
  double beta0 = 1e-6;  // compliance floor
  double betap = 1.0;   // gradient-window weight
  double betac = 1.0;   // curvature-window weight
  double tol_upen = 1e-3;
  int kmax_upen = 500;
  SolverConfig solver;
  double rho = 0.0;  // lower bound used by ConstraintMode::lower_bound
  ConstraintMode mode = ConstraintMode::nonneg;
  double gamma = 1.0;  // sentinel scale for exactly flat points of the strict rule
};

inline void validate(const UpenConfig& c) {
  if (!(c.beta0 > 0.0) || c.betap < 0.0 || c.betac < 0.0)
    throw std::invalid_argument("UpenConfig: beta0 must be > 0, betap/betac >= 0");
  if (!(c.tol_upen > 0.0 && c.tol_upen < 1.0) || c.kmax_upen < 1)
    throw std::invalid_argument("UpenConfig: bad outer-loop controls");
  if (!(c.gamma > 0.0)) throw std::invalid_argument("UpenConfig: gamma must be positive");
  if (!std::isfinite(c.rho)) throw std::invalid_argument("UpenConfig: rho must be finite");
  validate(c.solver);
}

/// Tolerances for synthetic data at ordinary noise.
inline UpenConfig simulation_preset() {
  UpenConfig c;
  c.solver.tol_gp = 1e-2;
  c.solver.tol_np = 1e-6;
  c.solver.tol_cg = 1e-3;
  return c;
}

/// Tighter tolerances for noise levels around 1e-3 and below.
inline UpenConfig low_noise_preset() {
  UpenConfig c;
  c.solver.tol_gp = 1e-3;
  c.solver.tol_np = 1e-8;
  c.solver.tol_cg = 1e-4;
  return c;
}

/// Looser tolerances and smaller window weights for measured data.
inline UpenConfig real_data_preset() {
  UpenConfig c;
  c.beta0 = 5e-7;
  c.betap = 5e-2;
  c.betac = 2e-2;
  c.solver.tol_gp = 1e-2;
  c.solver.tol_np = 1e-4;
  c.solver.tol_cg = 1e-1;
  return c;
}

/// A-priori bounds |Kf* - s| <= epsilon, |Lf*| <= smoothness.
struct MillerBounds {
  double epsilon = 0.0;
  double smoothness = 0.0;
};

/// One-parameter weight alpha = (epsilon / smoothness)^2 balancing the
/// two bounds.
inline double miller_alpha(const MillerBounds& b) {
  if (!(b.epsilon > 0.0) || !(b.smoothness > 0.0) || !std::isfinite(b.epsilon) ||
      !std::isfinite(b.smoothness))
    throw std::invalid_argument("miller_alpha: bounds must be positive and finite");
  return (b.epsilon * b.epsilon) / (b.smoothness * b.smoothness);
}

/// Exact uniform-penalty weights: lambda_i (Lf)_i^2 = res^2 / N0 on the
/// N0 cells with nonzero curvature; flat cells get the sentinel
/// gamma * res^2 so the penalty matrix stays positive.
inline RegularizationField update_lambda_strict(const LaplacianOp& lap,
                                                const Eigen::Ref<const Vector>& f, double res_norm,
                                                double gamma = 1.0) {
  if (!(res_norm > 0.0) || !std::isfinite(res_norm))
    throw std::invalid_argument("update_lambda_strict: residual must be positive");
  if (!(gamma > 0.0)) throw std::invalid_argument("update_lambda_strict: gamma must be positive");
  const Vector lf = lap.apply(f);
  Index n0 = 0;
  for (Index i = 0; i < lf.size(); ++i)
    if (lf[i] * lf[i] > kCurvatureZeroSq) ++n0;
  if (n0 == 0) throw std::domain_error("update_lambda_strict: field has no curvature");
  const double res2 = res_norm * res_norm;
  RegularizationField out;
  out.nx = lap.nx();
  out.ny = lap.ny();
  out.lambda.resize(lf.size());
  for (Index i = 0; i < lf.size(); ++i) {
    const double c2 = lf[i] * lf[i];
    out.lambda[i] = c2 > kCurvatureZeroSq ? res2 / (double(n0) * c2) : gamma * res2;
  }
  return out;
}

/// Relaxed rule: lambda_i = res^2 / (N (beta0 + betap max p^2 + betac
/// max c^2)), the maxima taken over the squared gradient-magnitude and
/// curvature entries in the clipped 3x3 window around cell i.
inline RegularizationField update_lambda_relaxed(const Distribution& dist, double res_norm,
                                                 const UpenConfig& cfg) {
  validate(cfg);
  if (res_norm < 0.0 || !std::isfinite(res_norm))
    throw std::invalid_argument("update_lambda_relaxed: bad residual");
  const LaplacianOp lap(dist.nx(), dist.ny());
  const Matrix p2 = neighborhood_max_sq_field(gradient_magnitude_map(dist));
  const Matrix c2 = neighborhood_max_sq_field(curvature_map(lap, dist));
  const double res2 = res_norm * res_norm;
  const double n = double(dist.size());
  RegularizationField out;
  out.nx = dist.nx();
  out.ny = dist.ny();
  out.lambda.resize(dist.size());
  Eigen::Map<Matrix> lam(out.lambda.data(), dist.nx(), dist.ny());
  for (Index j = 0; j < dist.ny(); ++j)
    for (Index i = 0; i < dist.nx(); ++i)
      lam(i, j) = res2 / (n * (cfg.beta0 + cfg.betap * p2(i, j) + cfg.betac * c2(i, j)));
  return out;
}

struct PenaltyCheckReport {
  double max_rel_deviation = 0.0;
};

/// Recomputes the relaxed-rule denominators from the map and verifies
/// lambda_i * N * denom_i == res^2 for every cell.
inline PenaltyCheckReport uniform_penalty_check(const Distribution& dist,
                                                const RegularizationField& field, double res_norm,
                                                const UpenConfig& cfg) {
  if (field.lambda.size() != dist.size())
    throw std::invalid_argument("uniform_penalty_check: length mismatch");
  const LaplacianOp lap(dist.nx(), dist.ny());
  const Matrix p2 = neighborhood_max_sq_field(gradient_magnitude_map(dist));
  const Matrix c2 = neighborhood_max_sq_field(curvature_map(lap, dist));
  const double res2 = res_norm * res_norm;
  const double n = double(dist.size());
  PenaltyCheckReport rep;
  const Eigen::Map<const Matrix> lam(field.lambda.data(), dist.nx(), dist.ny());
  for (Index j = 0; j < dist.ny(); ++j)
    for (Index i = 0; i < dist.nx(); ++i) {
      const double denom = n * (cfg.beta0 + cfg.betap * p2(i, j) + cfg.betac * c2(i, j));
      const double dev = res2 > 0.0 ? std::abs(lam(i, j) * denom - res2) / res2
                                    : std::abs(lam(i, j)) * denom;
      rep.max_rel_deviation = std::max(rep.max_rel_deviation, dev);
    }
  return rep;
}

/// Strict-rule variant: lambda_i (Lf)_i^2 must be one constant across all
/// cells with nonzero curvature; reports the worst relative spread.
inline PenaltyCheckReport uniform_penalty_check_strict(const LaplacianOp& lap,
                                                       const Eigen::Ref<const Vector>& f,
                                                       const RegularizationField& field) {
  if (field.lambda.size() != lap.size())
    throw std::invalid_argument("uniform_penalty_check_strict: length mismatch");
  const Vector lf = lap.apply(f);
  double sum = 0.0;
  Index n0 = 0;
  for (Index i = 0; i < lf.size(); ++i)
    if (lf[i] * lf[i] > kCurvatureZeroSq) {
      sum += field.lambda[i] * lf[i] * lf[i];
      ++n0;
    }
  PenaltyCheckReport rep;
  if (n0 == 0) return rep;
  const double c = sum / double(n0);
  for (Index i = 0; i < lf.size(); ++i)
    if (lf[i] * lf[i] > kCurvatureZeroSq)
      rep.max_rel_deviation =
          std::max(rep.max_rel_deviation, std::abs(field.lambda[i] * lf[i] * lf[i] - c) / c);
  return rep;
}

struct Lemma1Report {
  double residual_sq = 0.0;
  double penalty_sum = 0.0;
  double total = 0.0;
  double epsilon_sq = 0.0;
  bool residual_within_epsilon = false;
  bool two_epsilon_bound_holds = false;
};

/// With strict weights built at level eps, the penalty sum collapses to
/// eps^2 exactly, so the full objective is |Kf - s|^2 + eps^2 and lands
/// under 2 eps^2 whenever the residual is within eps.
inline Lemma1Report lemma1_objective_check(const KernelPair& kp, const Vector& s,
                                           const LaplacianOp& lap, const Vector& f, double eps,
                                           double gamma = 1.0) {
  const RegularizationField field = update_lambda_strict(lap, f, eps, gamma);
  const Vector lf = lap.apply(f);
  Lemma1Report rep;
  rep.epsilon_sq = eps * eps;
  rep.penalty_sum = field.lambda.dot(lf.cwiseAbs2());
  rep.residual_sq = (kron_matvec(kp, f) - s).squaredNorm();
  rep.total = rep.residual_sq + rep.penalty_sum;
  rep.residual_within_epsilon = rep.residual_sq <= rep.epsilon_sq * (1.0 + 1e-12);
  rep.two_epsilon_bound_holds = rep.total <= 2.0 * rep.epsilon_sq * (1.0 + 1e-12);
  return rep;
}

namespace detail {

inline Matrix dense_kron(const KernelPair& kp) {
  Matrix k(kp.rows(), kp.cols());
  for (Index j2 = 0; j2 < kp.ny(); ++j2)
    for (Index j1 = 0; j1 < kp.nx(); ++j1)
      for (Index i2 = 0; i2 < kp.m2(); ++i2)
        for (Index i1 = 0; i1 < kp.m1(); ++i1)
          k(i1 + kp.m1() * i2, j1 + kp.nx() * j2) = kp.K2(i2, j2) * kp.K1(i1, j1);
  return k;
}

}  // namespace detail

/// Dense small-instance evaluation of R = (K'K + L' D L)^{-1} K' applied
/// to K f_ref, where D carries the squared strict weights at level eps
/// and the sentinel gamma eps^2 on flat cells. As eps shrinks, R K f_ref
/// approaches f_ref.
inline Vector lemma2_operator_apply(const KernelPair& kp, const LaplacianOp& lap,
                                    const Vector& f_ref, double eps, double gamma = 1.0) {
  if (kp.cols() > 256)
    throw std::invalid_argument("lemma2_operator_apply: dense path is for small instances");
  if (f_ref.size() != kp.cols() || lap.size() != kp.cols())
    throw std::invalid_argument("lemma2_operator_apply: length mismatch");
  if (eps < 0.0 || !(gamma > 0.0)) throw std::invalid_argument("lemma2_operator_apply: bad level");
  const Vector lf = lap.apply(f_ref);
  Index n0 = 0;
  for (Index i = 0; i < lf.size(); ++i)
    if (lf[i] * lf[i] > kCurvatureZeroSq) ++n0;
  const double eps2 = eps * eps;
  Vector d(lf.size());
  for (Index i = 0; i < lf.size(); ++i) {
    const double c2 = lf[i] * lf[i];
    if (c2 > kCurvatureZeroSq && n0 > 0) {
      const double lam = eps2 / (double(n0) * c2);
      d[i] = lam * lam;
    } else {
      d[i] = gamma * eps2;
    }
  }
  const Matrix k = detail::dense_kron(kp);
  const Matrix ld = lap.dense();
  const Matrix a = k.transpose() * k + ld.transpose() * d.asDiagonal() * ld;
  const Vector rhs = k.transpose() * (k * f_ref);
  return a.ldlt().solve(rhs);
}

/// One constrained quadratic solve with a constant weight field.
inline std::pair<Distribution, SolverReport> tikhonov_solve(const KernelPair& kp, const Vector& s,
                                                            double alpha, const UpenConfig& cfg,
                                                            const Vector* start = nullptr) {
  validate(cfg);
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw std::invalid_argument("tikhonov_solve: alpha must be positive");
  const double rho = cfg.mode == ConstraintMode::lower_bound ? cfg.rho : 0.0;
  const LaplacianOp lap(kp.nx(), kp.ny());
  const QuadraticObjective obj(kp, s, Vector::Constant(kp.cols(), alpha), lap, rho);
  Vector f0 = start ? *start : gp_solve(kp, s, Vector::Zero(kp.cols()), cfg.solver, rho).first;
  if (cfg.mode != ConstraintMode::unconstrained) f0 = project_lower_bound(std::move(f0), rho);
  auto [f, rep] = npcg_solve(obj, std::move(f0), cfg.solver,
                             cfg.mode != ConstraintMode::unconstrained);
  return {to_distribution(f, kp.nx(), kp.ny()), rep};
}

inline Vector default_alpha_grid() { return log_spaced(1e-8, 1e2, 40); }

struct AlphaSearchResult {
  double alpha = 0.0;
  Distribution f;
  double err = 0.0;
  std::vector<double> alphas;  // ascending, deduplicated
  std::vector<double> errors;  // matching entries of alphas
  long long cg_iterations = 0;
};

/// Reference-guided sweep: solves the constant-weight problem on every
/// grid value and returns the reconstruction with the smallest relative
/// error against f_true; exact ties resolve to the smallest alpha. Every
/// row starts from the same gradient-projection point (it depends only on
/// the data, not on alpha), so rows are independent: chaining each row off
/// its neighbour's result was observed to drag an over-smoothed iterate
/// down the grid and understate the error at small alpha.
inline AlphaSearchResult optimal_alpha_search(const KernelPair& kp, const Vector& s,
                                              const Vector& f_true,
                                              const Eigen::Ref<const Vector>& alphas,
                                              const UpenConfig& cfg) {
  validate(cfg);
  if (f_true.size() != kp.cols())
    throw std::invalid_argument("optimal_alpha_search: reference length mismatch");
  if (f_true.norm() == 0.0) throw std::invalid_argument("optimal_alpha_search: zero reference");
  if (alphas.size() == 0) throw std::invalid_argument("optimal_alpha_search: empty grid");
  std::vector<double> grid(alphas.data(), alphas.data() + alphas.size());
  for (double a : grid)
    if (!(a > 0.0) || !std::isfinite(a))
      throw std::invalid_argument("optimal_alpha_search: grid values must be positive");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  AlphaSearchResult out;
  out.alphas = grid;
  out.errors.assign(grid.size(), 0.0);
  const double rho = cfg.mode == ConstraintMode::lower_bound ? cfg.rho : 0.0;
  const Vector start = gp_solve(kp, s, Vector::Zero(kp.cols()), cfg.solver, rho).first;
  std::size_t best = grid.size();
  Distribution best_f;
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    auto [f, rep] = tikhonov_solve(kp, s, grid[idx], cfg, &start);
    out.cg_iterations += rep.cg_iterations;
    out.errors[idx] = relative_error(f.vec(), f_true);
    if (best == grid.size() || out.errors[idx] < out.errors[best]) {
      best = idx;
      best_f = std::move(f);
    }
  }
  out.alpha = grid[best];
  out.err = out.errors[best];
  out.f = std::move(best_f);
  return out;
}

struct UpenIteration {
  double residual_norm = 0.0;    // |Kf - s| of the iterate the weights were built from
  double relative_change = 0.0;  // |f_next - f| / |f|
  double lambda_deviation = 0.0; // uniform-penalty identity residual for this field
  Vector iterate;                // the entering iterate
  SolverReport inner;
};

struct UpenResult {
  Distribution f;
  RegularizationField lambda;
  std::vector<UpenIteration> history;
  TerminationReason reason = TerminationReason::converged;
  int gp_iterations = 0;
  long long cg_iterations = 0;
  int outer_iterations() const { return int(history.size()); }
};

/// Full inversion: gradient-projection warm start, then alternate the
/// relaxed weight update with a constrained Newton-projection solve until
/// successive iterates agree to tol_upen.
///
/// Convergence requires the relative iterate change to stay below tol_upen
/// for several consecutive outer iterations. The alternation advances in
/// bursts: as the weights drift they occasionally unlock a cascade of
/// active-set changes, and quiet spells of up to six outers right before
/// such a burst have been observed, so a single quiet step is not a safe
/// stopping signal.
inline constexpr int kUpenQuietOuters = 10;

inline UpenResult upen_run(const KernelPair& kp, const SignalData& sig, const UpenConfig& cfg) {
  validate(cfg);
  if (sig.m1() != kp.m1() || sig.m2() != kp.m2())
    throw std::invalid_argument("upen_run: signal shape mismatch");
  const Vector s = sig.vec();
  const Index n = kp.cols();
  UpenResult out;
  if (s.norm() == 0.0) {
    out.f = to_distribution(Vector::Zero(n), kp.nx(), kp.ny());
    out.lambda = {Vector::Zero(n), kp.nx(), kp.ny()};
    out.reason = TerminationReason::zero_data;
    return out;
  }
  const double rho = cfg.mode == ConstraintMode::lower_bound ? cfg.rho : 0.0;
  const bool constrained = cfg.mode != ConstraintMode::unconstrained;
  const LaplacianOp lap(kp.nx(), kp.ny());

  auto [f, gp_rep] = gp_solve(kp, s, Vector::Zero(n), cfg.solver, rho);
  out.gp_iterations = gp_rep.iterations;
  out.reason = TerminationReason::max_iterations;
  int quiet_outers = 0;
  for (int k = 0; k < cfg.kmax_upen; ++k) {
    const Distribution dist = to_distribution(f, kp.nx(), kp.ny());
    const double res = (kron_matvec(kp, f) - s).norm();
    RegularizationField field = update_lambda_relaxed(dist, res, cfg);
    const double dev = uniform_penalty_check(dist, field, res, cfg).max_rel_deviation;

    const QuadraticObjective obj(kp, s, field.lambda, lap, rho);
    auto [f_next, rep] = npcg_solve(obj, f, cfg.solver, constrained);
    out.cg_iterations += rep.cg_iterations;

    UpenIteration it;
    it.residual_norm = res;
    it.lambda_deviation = dev;
    it.relative_change = (f_next - f).norm() / std::max(f.norm(), 1e-300);
    it.iterate = f;
    it.inner = std::move(rep);
    out.history.push_back(std::move(it));
    out.lambda = std::move(field);

    f = std::move(f_next);
    if (out.history.back().relative_change < cfg.tol_upen)
      ++quiet_outers;
    else
      quiet_outers = 0;
    if (quiet_outers >= kUpenQuietOuters) {
      out.reason = TerminationReason::converged;
      break;
    }
  }
  out.f = to_distribution(f, kp.nx(), kp.ny());
  return out;
}

}  // namespace upen2d
