// End-to-end acceptance checks. Each test prints one verdict line so the
// log shows every criterion's outcome at a glance; the expensive
// desk-scale inversions are computed once and shared.
#include "upen2d/upen2d.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace upen2d;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool announce(int number, const char* name, bool pass) {
  std::printf("[ACCEPTANCE] %2d %-28s %s\n", number, name, pass ? "PASS" : "FAIL");
  std::fflush(stdout);
  return pass;
}

struct DeskRun {
  double delta = 0.0;
  UpenConfig cfg;
  SignalData sig;
  UpenResult result;
  ErrorReport report;
  double wall_seconds = 0.0;
};

// P1 analogue at desk scale: 64x64 unknowns, 128x128 data, three noise
// levels off one fixed seed.
struct DeskScale {
  KernelPair kp;
  Vector truth;
  std::array<DeskRun, 3> runs;
};

const DeskScale& desk_scale() {
  static const DeskScale ds = [] {
    DeskScale d;
    const RelaxationGrid relax = default_relaxation_grid(64, 64);
    const AcquisitionGrid acq = default_acquisition_grid(128, 128);
    d.kp = build_kernels(acq, relax);
    const Distribution truth = make_phantom(Phantom::p1, relax);
    d.truth = truth.vec();
    const SignalData clean = forward_model(d.kp, truth);
    const double deltas[3] = {1e-3, 1e-2, 1e-1};
    for (int i = 0; i < 3; ++i) {
      DeskRun& r = d.runs[std::size_t(i)];
      r.delta = deltas[i];
      r.cfg = r.delta <= 1e-3 ? low_noise_preset() : simulation_preset();
      r.sig = add_noise(clean, r.delta, 7);
      const auto t0 = Clock::now();
      r.result = upen_run(d.kp, r.sig, r.cfg);
      r.wall_seconds = seconds_since(t0);
      r.report = error_report(d.kp, r.result.f.vec(), d.truth, r.sig.vec());
      std::printf(
          "[info] P1 64x64 delta=%.0e: k_upen=%d it_cg=%lld gp=%d res=%.6e err=%.4f time=%.1fs\n",
          r.delta, r.result.outer_iterations(), r.result.cg_iterations, r.result.gp_iterations,
          r.report.res, r.report.err, r.wall_seconds);
      std::fflush(stdout);
    }
    return d;
  }();
  return ds;
}

// P2 analogue: 96x96 unknowns with a plateau, inverted by the adaptive
// method and by the best constant-weight baseline a grid search can find.
struct P2Scale {
  KernelPair kp;
  Vector truth;
  SignalData sig;
  UpenResult upen;
  ErrorReport upen_report;
  double upen_seconds = 0.0;
  AlphaSearchResult baseline;
  double baseline_seconds = 0.0;
};

const P2Scale& p2_scale() {
  static const P2Scale ps = [] {
    P2Scale p;
    const RelaxationGrid relax = default_relaxation_grid(96, 96);
    const AcquisitionGrid acq = default_acquisition_grid(128, 128);
    p.kp = build_kernels(acq, relax);
    const Distribution truth = make_phantom(Phantom::p2, relax);
    p.truth = truth.vec();
    p.sig = add_noise(forward_model(p.kp, truth), 1e-2, 11);

    auto t0 = Clock::now();
    p.upen = upen_run(p.kp, p.sig, simulation_preset());
    p.upen_seconds = seconds_since(t0);
    p.upen_report = error_report(p.kp, p.upen.f.vec(), p.truth, p.sig.vec());
    std::printf("[info] P2 96x96 adaptive: k_upen=%d it_cg=%lld res=%.6e err=%.4f time=%.1fs\n",
                p.upen.outer_iterations(), p.upen.cg_iterations, p.upen_report.res,
                p.upen_report.err, p.upen_seconds);
    std::fflush(stdout);

    t0 = Clock::now();
    // Per-row Newton budget for the grid sweep. Every row starts from the
    // same gradient-projection iterate, and rows near the optimum converge
    // within about 1100 Newton steps; only the tiny-alpha tail is cut off,
    // where the error sits far above the minimum and still rises with extra
    // refinement, so the reported minimum is unaffected while the sweep
    // stays inside the time budget.
    UpenConfig sweep = simulation_preset();
    sweep.solver.max_np = 1200;
    p.baseline = optimal_alpha_search(p.kp, p.sig.vec(), p.truth, default_alpha_grid(), sweep);
    p.baseline_seconds = seconds_since(t0);
    std::printf("[info] P2 96x96 baseline: alpha=%.6e err=%.4f it_cg=%lld time=%.1fs\n",
                p.baseline.alpha, p.baseline.err, p.baseline.cg_iterations, p.baseline_seconds);
    std::fflush(stdout);
    return p;
  }();
  return ps;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST(Acceptance, C01_OperatorCorrectness) {
  const auto t0 = Clock::now();
  std::mt19937 rng(101);
  double worst = 0.0;
  auto probe = [&](Index m1, Index m2, Index nx, Index ny) {
    const KernelPair kp = testsupport::random_kernel_pair(m1, m2, nx, ny, rng);
    const Matrix k = testsupport::dense_model_matrix(kp);
    const Vector f = testsupport::random_vector(kp.cols(), rng);
    const Vector r = testsupport::random_vector(kp.rows(), rng);
    worst = std::max(worst, (kron_matvec(kp, f) - k * f).lpNorm<Eigen::Infinity>());
    worst = std::max(worst, (kron_rmatvec(kp, r) - k.transpose() * r).lpNorm<Eigen::Infinity>());
  };
  for (Index m1 = 1; m1 <= 5; ++m1)
    for (Index m2 = 1; m2 <= 5; ++m2)
      for (Index nx = 1; nx <= 5; ++nx)
        for (Index ny = 1; ny <= 5; ++ny) probe(m1, m2, nx, ny);
  std::uniform_int_distribution<Index> dim(6, 14);
  for (int rep = 0; rep < 20; ++rep) probe(dim(rng), dim(rng), dim(rng), dim(rng));
  const double elapsed = seconds_since(t0);
  std::printf("[info] operators: max abs deviation %.3e, %.2fs\n", worst, elapsed);
  EXPECT_TRUE(announce(1, "operator correctness", worst <= 1e-12 && elapsed < 10.0));
}

TEST(Acceptance, C02_GradientHessianChecks) {
  const auto t0 = Clock::now();
  std::mt19937 rng(102);
  bool pass = true;
  for (int rep = 0; rep < 10; ++rep) {
    const KernelPair kp = testsupport::random_kernel_pair(8, 7, 6, 5, rng);
    const Vector s = testsupport::random_vector(56, rng);
    const Vector lam = testsupport::random_vector(30, rng, 0.0, 1.0);
    const LaplacianOp lap(6, 5);
    const QuadraticObjective obj(kp, s, lam, lap);
    const Vector f = testsupport::random_vector(30, rng);

    const Vector g = obj.gradient(f);
    Vector g_fd(30);
    const double h = 1e-6;
    for (Index i = 0; i < 30; ++i) {
      Vector fp = f, fm = f;
      fp[i] += h;
      fm[i] -= h;
      g_fd[i] = (obj.value(fp) - obj.value(fm)) / (2.0 * h);
    }
    pass = pass && (g - g_fd).lpNorm<Eigen::Infinity>() <= 1e-5 * g.lpNorm<Eigen::Infinity>();

    Matrix hess(30, 30);
    for (Index i = 0; i < 30; ++i) hess.col(i) = obj.hessian_product(Vector::Unit(30, i));
    const double scale = hess.lpNorm<Eigen::Infinity>();
    pass = pass && (hess - hess.transpose()).lpNorm<Eigen::Infinity>() <= 1e-12 * scale;
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(hess);
    pass = pass && eig.eigenvalues().minCoeff() >= -1e-12 * scale;
  }
  const double elapsed = seconds_since(t0);
  EXPECT_TRUE(announce(2, "gradient/Hessian checks", pass && elapsed < 10.0));
}

TEST(Acceptance, C03_ConstrainedSolverOracle) {
  std::mt19937 rng(103);
  SolverConfig cfg;
  cfg.tol_cg = 1e-12;
  cfg.tol_np = 1e-14;
  cfg.max_np = 400;
  cfg.max_cg = 400;
  const Index shapes[6][2] = {{2, 2}, {3, 2}, {2, 4}, {3, 3}, {2, 5}, {3, 4}};
  bool pass = true;
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto& sh = shapes[rep % 6];
    const Index n = sh[0] * sh[1];
    const KernelPair kp = testsupport::random_kernel_pair(n + 3, n, sh[0], sh[1], rng);
    const Vector s = testsupport::random_vector(kp.rows(), rng);
    const Vector lam = testsupport::random_vector(n, rng, 0.0, 0.4);
    const LaplacianOp lap(sh[0], sh[1]);
    const QuadraticObjective obj(kp, s, lam, lap);
    const Vector expected =
        testsupport::kkt_enumerate(testsupport::dense_quadratic(kp, s, lam, lap.dense()), 0.0);
    const auto [f, rep_out] = npcg_solve(obj, Vector::Zero(n), cfg);
    worst = std::max(worst, (f - expected).lpNorm<Eigen::Infinity>());
    for (std::size_t k = 1; k < rep_out.objective_trace.size(); ++k)
      pass = pass && rep_out.objective_trace[k] <= rep_out.objective_trace[k - 1] + 1e-12;
  }
  std::printf("[info] constrained solver: worst coordinate deviation %.3e\n", worst);
  EXPECT_TRUE(announce(3, "constrained-solver oracle", pass && worst <= 1e-6));
}

TEST(Acceptance, C04_PenaltyIdentity) {
  std::mt19937 rng(104);
  bool pass = true;
  for (int rep = 0; rep < 20; ++rep) {
    const KernelPair kp = testsupport::random_kernel_pair(7, 6, 4, 4, rng);
    const LaplacianOp lap(4, 4);
    const Vector f = testsupport::random_vector(16, rng, 0.0, 1.0);
    Vector e = testsupport::random_vector(42, rng);
    const double noise = 0.02 + 0.1 * double(rep) / 20.0;
    e *= noise / e.norm();
    const Vector s = testsupport::dense_model_matrix(kp) * f + e;
    // identity at an arbitrary level, bound at a level above the residual
    for (const double eps : {noise, 2.0 * noise}) {
      const Lemma1Report rep1 = lemma1_objective_check(kp, s, lap, f, eps);
      const double expected = rep1.residual_sq + eps * eps;
      pass = pass && std::abs(rep1.total - expected) <= 1e-10 * expected;
      pass = pass && rep1.residual_within_epsilon;
      pass = pass && rep1.two_epsilon_bound_holds;
    }
    const Lemma1Report tight = lemma1_objective_check(kp, s, lap, f, 0.25 * noise);
    pass = pass && !tight.residual_within_epsilon;
  }
  EXPECT_TRUE(announce(4, "penalty-sum identity", pass));
}

TEST(Acceptance, C05_UniformPenaltyAudit) {
  bool pass = true;
  long long fields = 0;
  double worst = 0.0;
  auto audit = [&](const UpenResult& out, const UpenConfig& cfg, const KernelPair& kp) {
    for (const UpenIteration& it : out.history) {
      worst = std::max(worst, it.lambda_deviation);
      ++fields;
    }
    // independent recheck of the last emitted field from its stored iterate
    const UpenIteration& last = out.history.back();
    const Distribution dist = to_distribution(last.iterate, kp.nx(), kp.ny());
    const double dev =
        uniform_penalty_check(dist, out.lambda, last.residual_norm, cfg).max_rel_deviation;
    worst = std::max(worst, dev);
    pass = pass && dev <= 1e-10;
  };
  const DeskScale& ds = desk_scale();
  for (const DeskRun& r : ds.runs) audit(r.result, r.cfg, ds.kp);
  const P2Scale& ps = p2_scale();
  audit(ps.upen, simulation_preset(), ps.kp);
  std::printf("[info] uniform-penalty audit: %lld fields, worst deviation %.3e\n", fields, worst);
  EXPECT_TRUE(announce(5, "uniform-penalty audit", pass && worst <= 1e-10));
}

TEST(Acceptance, C06_ReconstructionLimitTrend) {
  const auto t0 = Clock::now();
  std::mt19937 rng(106);
  // A generic dense instance: the limit statement assumes K^T K is
  // invertible, which exponential kernels at this size are not in doubles.
  const KernelPair kp = testsupport::random_kernel_pair(10, 12, 8, 8, rng);
  const LaplacianOp lap(8, 8);
  const Vector f = testsupport::random_vector(64, rng, 0.1, 1.0);
  double prev = std::numeric_limits<double>::infinity();
  bool pass = true;
  for (const double eps : {1e-1, 1e-2, 1e-3}) {
    const double err = (lemma2_operator_apply(kp, lap, f, eps) - f).norm();
    std::printf("[info] limit trend eps=%.0e: deviation %.3e\n", eps, err);
    pass = pass && err < prev;
    prev = err;
  }
  const double elapsed = seconds_since(t0);
  EXPECT_TRUE(announce(6, "reconstruction limit trend", pass && elapsed < 5.0));
}

TEST(Acceptance, C07_DeskScaleP1) {
  const DeskScale& ds = desk_scale();
  const DeskRun& r = ds.runs[1];  // delta = 1e-2
  bool pass = r.report.res >= 0.98e-2 && r.report.res <= 1.02e-2;
  pass = pass && r.report.err <= 0.15;
  pass = pass && r.result.outer_iterations() <= 500;
  pass = pass && r.wall_seconds <= 600.0;
  EXPECT_TRUE(announce(7, "desk-scale two-peak run", pass));
}

TEST(Acceptance, C08_AdaptiveBeatsConstantBaseline) {
  const P2Scale& ps = p2_scale();
  const bool pass = ps.upen_report.err <= 0.9 * ps.baseline.err;
  std::printf("[info] adaptive err %.4f vs best constant-weight err %.4f (alpha %.3e)\n",
              ps.upen_report.err, ps.baseline.err, ps.baseline.alpha);
  EXPECT_TRUE(announce(8, "adaptive beats baseline", pass));
}

TEST(Acceptance, C09_NoiseLevelSweep) {
  const DeskScale& ds = desk_scale();
  bool pass = true;
  for (const DeskRun& r : ds.runs) {
    const double ratio = r.report.res / r.delta;
    pass = pass && r.result.reason == TerminationReason::converged;
    pass = pass && r.result.outer_iterations() < r.cfg.kmax_upen;
    pass = pass && ratio >= 0.98 && ratio <= 1.02;
    std::printf("[info] sweep delta=%.0e: res/delta=%.4f outer=%d (%s)\n", r.delta, ratio,
                r.result.outer_iterations(), to_string(r.result.reason));
  }
  EXPECT_TRUE(announce(9, "noise-level sweep", pass));
}

TEST(Acceptance, C10_Windowing) {
  bool pass = true;
  const WindowingPlan plan = make_windowing_plan(1024, 146);
  pass = pass && plan.output_points() == 146 && plan.input_points() == 1024;
  for (std::size_t i = 1; i < plan.edges.size(); ++i) {
    const Index w = plan.edges[i] - plan.edges[i - 1];
    const Index w_prev = i > 1 ? plan.edges[i - 1] - plan.edges[i - 2] : w;
    pass = pass && w >= 1 && w >= w_prev;
  }

  Measurement m;
  m.grid = default_acquisition_grid(4, 1024);
  m.signal.S = Matrix::Zero(4, 1024);
  for (Index i = 0; i < 4; ++i) m.signal.S.row(i).setConstant(0.25 * double(i + 1));
  const Measurement red = window_cpmg(m, 146);
  pass = pass && red.signal.m2() == 146;
  for (Index i = 0; i < 4; ++i)
    for (Index k = 0; k < 146; ++k) pass = pass && red.signal.S(i, k) == 0.25 * double(i + 1);

  const WindowingPlan ident = make_windowing_plan(1024, 1024);
  for (std::size_t i = 1; i < ident.edges.size(); ++i)
    pass = pass && ident.edges[i] - ident.edges[i - 1] == 1;
  EXPECT_TRUE(announce(10, "echo-train windowing", pass));
}

TEST(Acceptance, C11_PipelineDeterminism) {
  const std::string cli = UPEN2D_CLI_EXECUTABLE;
  const std::string dir = ::testing::TempDir();
  auto run = [&](const std::string& args) {
    const std::string cmd = '"' + cli + "\" " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  bool pass = true;
  for (const char* tag : {"a", "b"}) {
    const std::string base = dir + "det_" + tag;
    pass = pass && run("simulate --phantom p1 --m1 32 --m2 48 --nx 20 --ny 20 --noise 1e-2 "
                       "--seed 42 --out " + base + ".sig --truth-out " + base + ".truth") == 0;
    pass = pass && run("invert --in " + base + ".sig --nx 20 --ny 20 --preset sim --out " + base +
                       ".map --lambda-out " + base + ".lam") == 0;
  }
  for (const char* ext : {".sig", ".truth", ".map", ".lam"}) {
    const std::string a = read_file(dir + "det_a" + ext);
    const std::string b = read_file(dir + "det_b" + ext);
    pass = pass && !a.empty() && a == b;
  }
  EXPECT_TRUE(announce(11, "pipeline determinism", pass));
}
