#pragma once

#include "upen2d/model.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace upen2d {

/// Acquisition grid plus the signal sampled on it; the unit the file
/// formats and the command-line tool move around.
struct Measurement {
  AcquisitionGrid grid;
  SignalData signal;
};

struct LoadedMap {
  RelaxationGrid grid;
  Distribution dist;
  std::optional<Matrix> lambda;
};

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.precision(17);
  return out;
}

inline void write_row(std::ofstream& out, const Vector& v) {
  for (Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
  out << '\n';
}

// rows follow the first (slow) axis
inline void write_rows(std::ofstream& out, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
    out << '\n';
  }
}

struct HeaderInfo {
  Index a = 0;
  Index b = 0;
};

inline HeaderInfo read_header(std::istream& in, const std::string& path, const std::string& tag) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": malformed header (empty file)");
  std::istringstream hs(line);
  std::string hash, kind;
  HeaderInfo h;
  if (!(hs >> hash >> kind >> h.a >> h.b) || hash != "#" || kind != tag || h.a < 1 || h.b < 1)
    throw std::runtime_error(path + ": malformed header (expected '# " + tag + " <rows> <cols>')");
  return h;
}

inline Vector read_values(std::istream& in, const std::string& path, Index count) {
  Vector v(count);
  std::string tok;
  for (Index i = 0; i < count; ++i) {
    if (!(in >> tok)) throw std::runtime_error(path + ": value count mismatch (file too short)");
    // strtod instead of stream extraction: "nan" and "inf" tokens must
    // reach the finiteness check rather than fail to parse
    char* end = nullptr;
    v[i] = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size())
      throw std::runtime_error(path + ": malformed value '" + tok + "'");
    if (!std::isfinite(v[i])) throw std::runtime_error(path + ": non-finite value");
  }
  return v;
}

inline Matrix rows_to_matrix(const Vector& flat, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = flat[i * cols + j];
  return m;
}

inline void check_time_order(const Vector& t, const std::string& path, const std::string& name) {
  for (Index i = 0; i < t.size(); ++i) {
    if (t[i] <= 0.0) throw std::runtime_error(path + ": " + name + " times must be positive");
    if (i > 0 && t[i] <= t[i - 1])
      throw std::runtime_error(path + ": times not strictly increasing (" + name + ")");
  }
}

}  // namespace detail

/// Whitespace-separated text: a '# signal M1 M2' header line, the t1 and
/// t2 axes, then the surface row by row (rows follow t1). Values carry 17
/// significant digits so round trips are bit exact.
inline void save_signal(const std::string& path, const Measurement& m) {
  if (m.grid.m1() != m.signal.m1() || m.grid.m2() != m.signal.m2())
    throw std::invalid_argument("save_signal: grid/signal shape mismatch");
  auto out = detail::open_out(path);
  out << "# signal " << m.grid.m1() << ' ' << m.grid.m2() << '\n';
  detail::write_row(out, m.grid.t1);
  detail::write_row(out, m.grid.t2);
  detail::write_rows(out, m.signal.S);
  if (!out) throw std::runtime_error(path + ": write failed");
}

inline Measurement load_signal(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  const auto h = detail::read_header(in, path, "signal");
  Measurement m;
  m.grid.t1 = detail::read_values(in, path, h.a);
  m.grid.t2 = detail::read_values(in, path, h.b);
  detail::check_time_order(m.grid.t1, path, "t1");
  detail::check_time_order(m.grid.t2, path, "t2");
  const Vector flat = detail::read_values(in, path, h.a * h.b);
  m.signal.S = detail::rows_to_matrix(flat, h.a, h.b);
  std::string extra;
  if (in >> extra) throw std::runtime_error(path + ": value count mismatch (trailing data)");
  return m;
}

/// '# map NX NY' header, T1 and T2 axes, the map row by row (rows follow
/// T1), then optionally a '# lambda' marker and the weight field in the
/// same layout.
inline void save_map(const std::string& path, const RelaxationGrid& grid, const Distribution& dist,
                     const Matrix* lambda = nullptr) {
  if (grid.nx() != dist.nx() || grid.ny() != dist.ny())
    throw std::invalid_argument("save_map: grid/map shape mismatch");
  if (lambda && (lambda->rows() != dist.nx() || lambda->cols() != dist.ny()))
    throw std::invalid_argument("save_map: weight-field shape mismatch");
  auto out = detail::open_out(path);
  out << "# map " << grid.nx() << ' ' << grid.ny() << '\n';
  detail::write_row(out, grid.T1);
  detail::write_row(out, grid.T2);
  detail::write_rows(out, dist.F);
  if (lambda) {
    out << "# lambda\n";
    detail::write_rows(out, *lambda);
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

inline LoadedMap load_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  const auto h = detail::read_header(in, path, "map");
  LoadedMap m;
  m.grid.T1 = detail::read_values(in, path, h.a);
  m.grid.T2 = detail::read_values(in, path, h.b);
  detail::check_time_order(m.grid.T1, path, "T1");
  detail::check_time_order(m.grid.T2, path, "T2");
  const Vector flat = detail::read_values(in, path, h.a * h.b);
  m.dist.F = detail::rows_to_matrix(flat, h.a, h.b);
  std::string tok;
  if (in >> tok) {
    std::string kind;
    if (tok != "#" || !(in >> kind) || kind != "lambda")
      throw std::runtime_error(path + ": value count mismatch (trailing data)");
    const Vector lflat = detail::read_values(in, path, h.a * h.b);
    m.lambda = detail::rows_to_matrix(lflat, h.a, h.b);
    if (in >> tok) throw std::runtime_error(path + ": value count mismatch (trailing data)");
  }
  return m;
}

/// Contiguous echo-axis windows with geometrically growing widths; the
/// leading windows have width one. edges has W+1 entries, edges[0] = 0,
/// edges[W] = NE, window w covers columns [edges[w], edges[w+1]).
struct WindowingPlan {
  std::vector<Index> edges;
  Index output_points() const { return Index(edges.size()) - 1; }
  Index input_points() const { return edges.back(); }
};

inline WindowingPlan make_windowing_plan(Index ne, Index target) {
  if (ne < 2) throw std::invalid_argument("make_windowing_plan: need at least two echoes");
  if (target < 2 || target > ne)
    throw std::invalid_argument("make_windowing_plan: window count out of range");
  // Widths w_j = max(1, floor(c * g^j)) with g = ne^(1/target) are
  // nondecreasing for any scale c; bisect on c until they sum to ne,
  // then hand the few leftover columns to the last windows.
  const double g = std::exp(std::log(double(ne)) / double(target));
  auto widths_for = [&](double c, std::vector<Index>& w) {
    w.assign(std::size_t(target), 1);
    Index sum = 0;
    double t = c;
    for (Index j = 0; j < target; ++j) {
      t *= g;
      if (t > double(ne)) t = double(ne);  // keep the floor finite
      w[std::size_t(j)] = std::max<Index>(1, Index(std::floor(t)));
      sum += w[std::size_t(j)];
    }
    return sum;
  };
  std::vector<Index> widths;
  double lo = 0.0, hi = double(ne);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (widths_for(mid, widths) <= ne ? lo : hi) = mid;
  }
  Index sum = widths_for(lo, widths);
  for (Index j = target - 1; sum < ne; ++sum) {
    ++widths[std::size_t(j)];
    j = j > 0 ? j - 1 : target - 1;
  }
  WindowingPlan plan;
  plan.edges.resize(std::size_t(target) + 1);
  plan.edges[0] = 0;
  for (Index j = 0; j < target; ++j)
    plan.edges[std::size_t(j) + 1] = plan.edges[std::size_t(j)] + widths[std::size_t(j)];
  return plan;
}

namespace detail {

// mean that returns the exact value when the block is constant
inline double block_mean(const Vector& v, Index lo, Index hi) {
  bool constant = true;
  for (Index i = lo + 1; i < hi && constant; ++i) constant = v[i] == v[lo];
  if (constant) return v[lo];
  double sum = 0.0;
  for (Index i = lo; i < hi; ++i) sum += v[i];
  return sum / double(hi - lo);
}

}  // namespace detail

/// Replaces the echo axis by per-window arithmetic means of both the
/// values and the times. The t1 axis is untouched; a noise record does
/// not survive windowing.
inline Measurement window_cpmg(const Measurement& m, Index target,
                               WindowingPlan* plan_out = nullptr) {
  if (m.grid.m1() != m.signal.m1() || m.grid.m2() != m.signal.m2())
    throw std::invalid_argument("window_cpmg: grid/signal shape mismatch");
  const WindowingPlan plan = make_windowing_plan(m.grid.m2(), target);
  const Index w = plan.output_points();
  Measurement out;
  out.grid.t1 = m.grid.t1;
  out.grid.t2.resize(w);
  out.signal.S.resize(m.signal.m1(), w);
  for (Index k = 0; k < w; ++k)
    out.grid.t2[k] = detail::block_mean(m.grid.t2, plan.edges[std::size_t(k)],
                                        plan.edges[std::size_t(k) + 1]);
  for (Index i = 0; i < m.signal.m1(); ++i) {
    const Vector row = m.signal.S.row(i).transpose();
    for (Index k = 0; k < w; ++k)
      out.signal.S(i, k) =
          detail::block_mean(row, plan.edges[std::size_t(k)], plan.edges[std::size_t(k) + 1]);
  }
  if (plan_out) *plan_out = plan;
  return out;
}

}  // namespace upen2d
