#pragma once

/// Error norms against exact solutions, convergence orders, and VTK / CSV export.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmigm/assembly.hpp"
#include "mmigm/geometry.hpp"

namespace mmigm {

struct ExactSolution {
  std::function<double(const Vec2&)> u;
  std::function<Vec2(const Vec2&)> grad;
};

struct ErrorReport {
  double L2 = 0.0;
  double H1_semi = 0.0;
  double L_inf = 0.0;  ///< lattice maximum, not a true supremum
  std::vector<double> per_element_L2;
  std::size_t dofs = 0;
  double h = 0.0;  ///< largest element diagonal
  double cpu_seconds = 0.0;

  double max_element_L2() const noexcept {
    return per_element_L2.empty() ? 0.0 : *std::max_element(per_element_L2.begin(), per_element_L2.end());
  }
};

/// Number of lattice samples per direction and element used for L-infinity.
inline constexpr int kLatticeSamples = 5;

/// L2 and H1-seminorm errors with (p+2) x (q+2) Gauss points per element and
/// a lattice L-infinity on 5 x 5 uniform samples per element (corners included).
inline ErrorReport error_norms(const NurbsGeometry& g, const FieldCoefficients& u, const ExactSolution& exact) {
  ErrorReport rep;
  rep.dofs = g.dofs();
  const auto tab = tabulate(g, g.p() + 2, g.q() + 2);
  double l2 = 0.0, h1 = 0.0;
  rep.per_element_L2.reserve(tab.size());
  for (const auto& ev : tab) {
    const std::size_t nl = ev.nloc();
    double el2 = 0.0;
    for (std::size_t qp = 0; qp < ev.points.size(); ++qp) {
      double uh = 0.0;
      Vec2 guh;
      for (std::size_t a = 0; a < nl; ++a) {
        const double c = u[ev.dofs[a]];
        uh += c * ev.value[qp * nl + a];
        guh += c * ev.grad[qp * nl + a];
      }
      const Vec2& x = ev.points[qp].x;
      const double e = uh - exact.u(x);
      el2 += e * e * ev.points[qp].jxw;
      if (exact.grad) {
        const Vec2 ge = guh - exact.grad(x);
        h1 += dot(ge, ge) * ev.points[qp].jxw;
      }
    }
    l2 += el2;
    rep.per_element_L2.push_back(std::sqrt(el2));
  }
  rep.L2 = std::sqrt(l2);
  rep.H1_semi = exact.grad ? std::sqrt(h1) : std::numeric_limits<double>::quiet_NaN();

  for (const auto& e : elements(g)) {
    for (int b = 0; b < kLatticeSamples; ++b)
      for (int a = 0; a < kLatticeSamples; ++a) {
        const double s = e.xi0 + (e.xi1 - e.xi0) * a / (kLatticeSamples - 1.0);
        const double t = e.eta0 + (e.eta1 - e.eta0) * b / (kLatticeSamples - 1.0);
        const FieldEval fe = eval_field(g, u, s, t, 0);
        rep.L_inf = std::max(rep.L_inf, std::abs(fe.value - exact.u(fe.x)));
      }
    const Vec2 c00 = map_point(g, e.xi0, e.eta0, 0).point, c11 = map_point(g, e.xi1, e.eta1, 0).point;
    const Vec2 c10 = map_point(g, e.xi1, e.eta0, 0).point, c01 = map_point(g, e.xi0, e.eta1, 0).point;
    rep.h = std::max({rep.h, norm(c11 - c00), norm(c10 - c01)});
  }
  return rep;
}

/// max |u_h| on the same lattice as the L-infinity error.
inline double lattice_max_abs(const NurbsGeometry& g, const FieldCoefficients& u) {
  double m = 0.0;
  for (const auto& e : elements(g))
    for (int b = 0; b < kLatticeSamples; ++b)
      for (int a = 0; a < kLatticeSamples; ++a) {
        const double s = e.xi0 + (e.xi1 - e.xi0) * a / (kLatticeSamples - 1.0);
        const double t = e.eta0 + (e.eta1 - e.eta0) * b / (kLatticeSamples - 1.0);
        m = std::max(m, std::abs(eval_field(g, u, s, t, 0).value));
      }
  return m;
}

/// log(e_{k-1}/e_k) / log(h_{k-1}/h_k); first entry and zero-error levels are empty.
inline std::vector<std::optional<double>> convergence_orders(std::span<const double> errors, std::span<const double> h) {
  if (errors.size() != h.size()) throw std::invalid_argument("convergence_orders: size mismatch");
  std::vector<std::optional<double>> out(errors.size());
  for (std::size_t k = 1; k < errors.size(); ++k) {
    if (!(errors[k] > 0.0) || !(errors[k - 1] > 0.0) || h[k] == h[k - 1]) continue;
    out[k] = std::log(errors[k - 1] / errors[k]) / std::log(h[k - 1] / h[k]);
  }
  return out;
}

struct ConvergenceOrders {
  std::vector<std::optional<double>> L2, H1;
};

inline ConvergenceOrders convergence_orders(std::span<const ErrorReport> reports) {
  if (reports.size() < 2) throw std::invalid_argument("convergence_orders: need at least two levels");
  std::vector<double> l2, h1, h;
  for (const auto& r : reports) {
    l2.push_back(r.L2);
    h1.push_back(r.H1_semi);
    h.push_back(r.h);
  }
  return {convergence_orders(l2, h), convergence_orders(h1, h)};
}

/// Scalar field sampled at parametric points.
struct NamedField {
  std::string name;
  std::function<double(double s_xi, double s_eta)> eval;
};

inline NamedField field_of(std::string name, const NurbsGeometry& g, const FieldCoefficients& u) {
  return {std::move(name), [&g, &u](double s, double t) { return eval_field(g, u, s, t, 0).value; }};
}

/// Full-precision decimal for text outputs.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Legacy ASCII VTK unstructured grid. Each element is sampled on a uniform
/// samples x samples parametric sub-grid; neighbouring elements share points,
/// and every sub-cell is a bilinear quad (cell type 9).
inline void export_vtk(const NurbsGeometry& g, const std::vector<NamedField>& fields, int samples_per_element,
                       const std::string& path) {
  if (samples_per_element < 2) throw std::invalid_argument("export_vtk: need at least 2 samples per element");
  const int S = samples_per_element;
  auto lattice = [S](const KnotVector& kv) {
    std::vector<double> t;
    for (std::size_t sp : kv.nonempty_spans()) {
      const double a = kv[sp], b = kv[sp + 1];
      for (int k = (t.empty() ? 0 : 1); k < S; ++k) t.push_back(k == S - 1 ? b : a + (b - a) * k / (S - 1.0));
    }
    return t;
  };
  const auto tx = lattice(g.kv_xi()), ty = lattice(g.kv_eta());
  const std::size_t nx = tx.size(), ny = ty.size();

  std::ofstream os(path);
  if (!os) throw std::runtime_error("export_vtk: cannot open " + path);
  os << "# vtk DataFile Version 3.0\nmmigm NURBS field sample\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << nx * ny << " double\n";
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const Vec2 x = map_point(g, tx[i], ty[j], 0).point;
      os << fmt17(x.x) << ' ' << fmt17(x.y) << " 0\n";
    }
  const std::size_t ncells = (nx - 1) * (ny - 1);
  os << "CELLS " << ncells << ' ' << ncells * 5 << '\n';
  for (std::size_t j = 0; j + 1 < ny; ++j)
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const std::size_t a = i + nx * j;
      os << "4 " << a << ' ' << a + 1 << ' ' << a + 1 + nx << ' ' << a + nx << '\n';
    }
  os << "CELL_TYPES " << ncells << '\n';
  for (std::size_t c = 0; c < ncells; ++c) os << "9\n";
  if (!fields.empty()) {
    os << "POINT_DATA " << nx * ny << '\n';
    for (const auto& f : fields) {
      os << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
      for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) os << fmt17(f.eval(tx[i], ty[j])) << '\n';
    }
  }
  if (!os) throw std::runtime_error("export_vtk: write failed for " + path);
}

/// One outer iteration of the moving-mesh loop.
struct TraceRow {
  std::size_t iter = 0;
  double xi_inf_err = 0.0;
  double tau_used = 0.0;
  double min_jacobian = 0.0;
  double L2 = std::numeric_limits<double>::quiet_NaN();
  double H1 = std::numeric_limits<double>::quiet_NaN();
  double Linf = std::numeric_limits<double>::quiet_NaN();
  double cpu_seconds = 0.0;
};

inline constexpr const char* kTraceHeader = "iter,xi_inf_err,tau_used,min_jacobian,L2,H1,Linf,cpu_seconds";

inline void export_trace(std::span<const TraceRow> rows, const std::string& path) {
  if (rows.empty()) throw std::invalid_argument("export_trace: empty trace");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("export_trace: cannot open " + path);
  os << kTraceHeader << '\n';
  for (const auto& r : rows)
    os << r.iter << ',' << fmt17(r.xi_inf_err) << ',' << fmt17(r.tau_used) << ',' << fmt17(r.min_jacobian) << ','
       << fmt17(r.L2) << ',' << fmt17(r.H1) << ',' << fmt17(r.Linf) << ',' << fmt17(r.cpu_seconds) << '\n';
  if (!os) throw std::runtime_error("export_trace: write failed for " + path);
}

}  // namespace mmigm
