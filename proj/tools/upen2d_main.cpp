// Command-line front end: simulate, window, invert, tikhonov, project.

#include "upen2d/upen2d.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>

namespace {

using namespace upen2d;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void print_kv(const char* key, double value) { std::printf("%s=%.17g\n", key, value); }
void print_kv(const char* key, long long value) { std::printf("%s=%lld\n", key, value); }

UpenConfig preset_by_name(const std::string& name) {
  if (name == "sim") return simulation_preset();
  if (name == "lownoise") return low_noise_preset();
  return real_data_preset();
}

ConstraintMode mode_by_name(const std::string& name) {
  if (name == "nonneg") return ConstraintMode::nonneg;
  if (name == "bound") return ConstraintMode::lower_bound;
  return ConstraintMode::unconstrained;
}

struct SimulateArgs {
  std::string phantom = "p1";
  Index m1 = 128, m2 = 128;
  Index nx = 0, ny = 0;  // 0: phantom default (64 for p1, 96 for p2)
  double noise = 1e-2;
  std::uint64_t seed = 0;
  std::string out;
  std::string truth_out;
};

int run_simulate(const SimulateArgs& a) {
  const Phantom kind = a.phantom == "p2" ? Phantom::p2 : Phantom::p1;
  const Index def = kind == Phantom::p2 ? 96 : 64;
  const Index nx = a.nx > 0 ? a.nx : def;
  const Index ny = a.ny > 0 ? a.ny : def;
  const RelaxationGrid relax = default_relaxation_grid(nx, ny);
  const AcquisitionGrid acq = default_acquisition_grid(a.m1, a.m2);
  const Distribution truth = make_phantom(kind, relax);
  const KernelPair kp = build_kernels(acq, relax);
  const SignalData noisy = add_noise(forward_model(kp, truth), a.noise, a.seed);
  const std::string truth_path = a.truth_out.empty() ? a.out + ".truth" : a.truth_out;
  save_signal(a.out, {acq, noisy});
  save_map(truth_path, relax, truth);
  std::printf("signal=%s\n", a.out.c_str());
  std::printf("truth=%s\n", truth_path.c_str());
  print_kv("noise", a.noise);
  return 0;
}

struct WindowArgs {
  std::string in, out;
  Index points = 146;
};

int run_window(const WindowArgs& a) {
  const Measurement m = load_signal(a.in);
  WindowingPlan plan;
  const Measurement w = window_cpmg(m, a.points, &plan);
  save_signal(a.out, w);
  print_kv("input_points", (long long)plan.input_points());
  print_kv("output_points", (long long)plan.output_points());
  std::printf("edges=");
  for (std::size_t i = 0; i < plan.edges.size(); ++i)
    std::printf("%s%lld", i ? "," : "", (long long)plan.edges[i]);
  std::printf("\n");
  return 0;
}

struct InvertArgs {
  std::string in, out, lambda_out, truth;
  Index nx = 64, ny = 0;  // ny 0: 73 under the real preset, else 64
  std::string preset = "sim";
  std::string mode = "nonneg";
  double rho = 0.0;
  double beta0 = -1.0, betap = -1.0, betac = -1.0;  // negative: keep preset value
};

int run_invert(const InvertArgs& a) {
  const Measurement m = load_signal(a.in);
  const Index ny = a.ny > 0 ? a.ny : (a.preset == "real" ? 73 : 64);
  const RelaxationGrid relax = default_relaxation_grid(a.nx, ny);
  const KernelPair kp = build_kernels(m.grid, relax);
  UpenConfig cfg = preset_by_name(a.preset);
  cfg.mode = mode_by_name(a.mode);
  cfg.rho = a.rho;
  if (a.beta0 >= 0.0) cfg.beta0 = a.beta0;
  if (a.betap >= 0.0) cfg.betap = a.betap;
  if (a.betac >= 0.0) cfg.betac = a.betac;

  Stopwatch timer;
  const UpenResult result = upen_run(kp, m.signal, cfg);
  const double wall = timer.seconds();

  const Matrix lambda_map = result.lambda.lambda.size() ? result.lambda.matrix() : Matrix();
  save_map(a.out, relax, result.f, lambda_map.size() ? &lambda_map : nullptr);
  if (!a.lambda_out.empty() && lambda_map.size())
    save_map(a.lambda_out, relax, Distribution{lambda_map});

  print_kv("k_upen", (long long)result.outer_iterations());
  print_kv("it_cg", result.cg_iterations);
  print_kv("res", residual_norm(kp, result.f.vec(), m.signal.vec()));
  if (!a.truth.empty()) {
    const LoadedMap t = load_map(a.truth);
    print_kv("err", relative_error(result.f.vec(), t.dist.vec()));
  }
  print_kv("wall_time_s", wall);
  return 0;
}

struct TikhonovArgs {
  std::string in, out, truth;
  double alpha = 0.0;
  bool search = false;
  Index nx = 64, ny = 64;
  std::string preset = "sim";
};

int run_tikhonov(const TikhonovArgs& a) {
  const Measurement m = load_signal(a.in);
  const RelaxationGrid relax = default_relaxation_grid(a.nx, a.ny);
  const KernelPair kp = build_kernels(m.grid, relax);
  const UpenConfig cfg = preset_by_name(a.preset);
  const Vector s = m.signal.vec();
  Stopwatch timer;
  if (a.search) {
    if (a.truth.empty())
      throw std::invalid_argument("tikhonov: --search needs --truth for the error metric");
    const LoadedMap t = load_map(a.truth);
    const AlphaSearchResult r = optimal_alpha_search(kp, s, t.dist.vec(), default_alpha_grid(), cfg);
    if (!a.out.empty()) save_map(a.out, relax, r.f);
    print_kv("alpha", r.alpha);
    print_kv("err", r.err);
    print_kv("it_cg", r.cg_iterations);
    print_kv("wall_time_s", timer.seconds());
    return 0;
  }
  auto [f, rep] = tikhonov_solve(kp, s, a.alpha, cfg);
  if (!a.out.empty()) save_map(a.out, relax, f);
  print_kv("alpha", a.alpha);
  print_kv("it_cg", rep.cg_iterations);
  print_kv("res", rep.final_residual_norm);
  if (!a.truth.empty()) {
    const LoadedMap t = load_map(a.truth);
    print_kv("err", relative_error(f.vec(), t.dist.vec()));
  }
  print_kv("wall_time_s", timer.seconds());
  return 0;
}

struct ProjectArgs {
  std::string in, out;
};

int run_project(const ProjectArgs& a) {
  const LoadedMap m = load_map(a.in);
  const auto [onto_t1, onto_t2] = sum_projections(m.dist);
  std::ofstream out(a.out);
  if (!out) throw std::runtime_error(a.out + ": cannot open for writing");
  out.precision(17);
  out << "# projection t1 " << onto_t1.size() << '\n';
  for (Index i = 0; i < onto_t1.size(); ++i) out << m.grid.T1[i] << ' ' << onto_t1[i] << '\n';
  out << "# projection t2 " << onto_t2.size() << '\n';
  for (Index j = 0; j < onto_t2.size(); ++j) out << m.grid.T2[j] << ' ' << onto_t2[j] << '\n';
  if (!out) throw std::runtime_error(a.out + ": write failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"T1-T2 map inversion with locally adapted regularization"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* csim = app.add_subcommand("simulate", "Generate a synthetic measurement and its truth map");
  csim->add_option("--phantom", sim.phantom)->check(CLI::IsMember({"p1", "p2"}));
  csim->add_option("--m1", sim.m1)->check(CLI::PositiveNumber);
  csim->add_option("--m2", sim.m2)->check(CLI::PositiveNumber);
  csim->add_option("--nx", sim.nx)->check(CLI::PositiveNumber);
  csim->add_option("--ny", sim.ny)->check(CLI::PositiveNumber);
  csim->add_option("--noise", sim.noise)->check(CLI::PositiveNumber);
  csim->add_option("--seed", sim.seed);
  csim->add_option("--out", sim.out)->required();
  csim->add_option("--truth-out", sim.truth_out);

  WindowArgs win;
  auto* cwin = app.add_subcommand("window", "Compress the echo axis into geometric windows");
  cwin->add_option("--in", win.in)->required();
  cwin->add_option("--points", win.points)->check(CLI::PositiveNumber);
  cwin->add_option("--out", win.out)->required();

  InvertArgs inv;
  auto* cinv = app.add_subcommand("invert", "Invert a measurement into a T1-T2 map");
  cinv->add_option("--in", inv.in)->required();
  cinv->add_option("--nx", inv.nx)->check(CLI::PositiveNumber);
  cinv->add_option("--ny", inv.ny)->check(CLI::PositiveNumber);
  cinv->add_option("--preset", inv.preset)->check(CLI::IsMember({"sim", "lownoise", "real"}));
  cinv->add_option("--mode", inv.mode)->check(CLI::IsMember({"nonneg", "bound", "unconstrained"}));
  cinv->add_option("--rho", inv.rho);
  cinv->add_option("--beta0", inv.beta0);
  cinv->add_option("--betap", inv.betap);
  cinv->add_option("--betac", inv.betac);
  cinv->add_option("--out", inv.out)->required();
  cinv->add_option("--lambda-out", inv.lambda_out);
  cinv->add_option("--truth", inv.truth);

  TikhonovArgs tik;
  auto* ctik = app.add_subcommand("tikhonov", "Constant-weight baseline inversion");
  ctik->add_option("--in", tik.in)->required();
  auto* alpha_opt = ctik->add_option("--alpha", tik.alpha)->check(CLI::PositiveNumber);
  auto* search_opt = ctik->add_flag("--search", tik.search);
  alpha_opt->excludes(search_opt);
  ctik->add_option("--nx", tik.nx)->check(CLI::PositiveNumber);
  ctik->add_option("--ny", tik.ny)->check(CLI::PositiveNumber);
  ctik->add_option("--preset", tik.preset)->check(CLI::IsMember({"sim", "lownoise", "real"}));
  ctik->add_option("--out", tik.out);
  ctik->add_option("--truth", tik.truth);

  ProjectArgs prj;
  auto* cprj = app.add_subcommand("project", "Write the T1 and T2 sum projections of a map");
  cprj->add_option("--in", prj.in)->required();
  cprj->add_option("--out", prj.out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (csim->parsed()) return run_simulate(sim);
    if (cwin->parsed()) return run_window(win);
    if (cinv->parsed()) return run_invert(inv);
    if (ctik->parsed()) {
      if (!tik.search && !(tik.alpha > 0.0))
        throw std::invalid_argument("tikhonov: give --alpha or --search");
      return run_tikhonov(tik);
    }
    if (cprj->parsed()) return run_project(prj);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
