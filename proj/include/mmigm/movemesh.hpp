#pragma once

/// Harmonic-map moving mesh on top of the isogeometric Poisson solver.
///
/// Three domains are involved: the parametric square, the physical domain
/// Omega = F([0,1]^2) and the logical domain Omega_c. The logical mesh A_j is
/// computed once from a Laplace solve and kept fixed. Each outer iteration
/// solves the weighted Euler-Lagrange equation -div(1/M grad xi) = 0 for the
/// current map xi*, moves every interior node by the exact inverse Jacobian of
/// xi* applied to A_j - xi*(X_j), damps the step with tau, re-fits F and
/// re-solves the PDE for the next monitor.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmigm/assembly.hpp"
#include "mmigm/geometry.hpp"
#include "mmigm/postproc.hpp"

namespace mmigm {

enum class MonitorKind { Gradient, Hessian, Combined };

/// M = sqrt(eps + alpha |grad u|^2 + beta |Hess u|_F^2).
/// `Gradient` uses eps = 1, beta = 0; `Hessian` uses eps = 1, alpha = 0.
struct MonitorSpec {
  MonitorKind kind = MonitorKind::Gradient;
  double epsilon = 1.0;
  double alpha = 0.0;
  double beta = 0.0;

  MonitorSpec effective() const {
    MonitorSpec e = *this;
    if (kind == MonitorKind::Gradient) {
      e.epsilon = 1.0;
      e.beta = 0.0;
    } else if (kind == MonitorKind::Hessian) {
      e.epsilon = 1.0;
      e.alpha = 0.0;
    }
    if (e.alpha < 0.0 || e.beta < 0.0 || e.epsilon < 0.0)
      throw std::invalid_argument("MonitorSpec: parameters must be nonnegative");
    if (!(e.epsilon > 0.0)) throw std::invalid_argument("MonitorSpec: epsilon must be positive");
    return e;
  }

  static MonitorSpec gradient(double alpha) { return {MonitorKind::Gradient, 1.0, alpha, 0.0}; }
  static MonitorSpec hessian(double beta) { return {MonitorKind::Hessian, 1.0, 0.0, beta}; }
  static MonitorSpec identity() { return {MonitorKind::Combined, 1.0, 0.0, 0.0}; }
};

inline double eval_monitor(const MonitorSpec& spec, const NurbsGeometry& g, const FieldCoefficients& u, double s_xi,
                           double s_eta) {
  const MonitorSpec e = spec.effective();
  if (e.alpha == 0.0 && e.beta == 0.0) return std::sqrt(e.epsilon);
  const FieldEval fe = eval_field(g, u, s_xi, s_eta, e.beta > 0.0 ? 2 : 1);
  const double h = fe.hess.frobenius();
  return std::sqrt(e.epsilon + e.alpha * dot(fe.grad, fe.grad) + e.beta * h * h);
}

/// Edge-wise affine map from the physical rectangle boundary onto the logical
/// rectangle boundary; vertices go to vertices and each edge is mapped
/// proportionally to arc length.
struct BoundaryMap {
  Rect physical;
  Rect logical;

  Vec2 operator()(const Vec2& x) const noexcept {
    return {logical.xmin + logical.width() * (x.x - physical.xmin) / physical.width(),
            logical.ymin + logical.height() * (x.y - physical.ymin) / physical.height()};
  }
};

inline BoundaryMap make_boundary_map(const Rect& physical, const Rect& logical) {
  if (!(physical.width() > 0 && physical.height() > 0 && logical.width() > 0 && logical.height() > 0))
    throw std::invalid_argument("make_boundary_map: degenerate rectangle");
  return {physical, logical};
}

/// Two scalar fields (xi, eta) representing a map Omega -> Omega_c.
struct MapFields {
  FieldCoefficients xi, eta;
};

struct LogicalMesh {
  Rect logical;
  MapFields xi0;
  Grid<Vec2> A;  ///< fixed logical node positions at the initial Greville grid
};

/// Solves -Laplace(xi) = 0 on Omega with xi = bm on the boundary, componentwise.
inline LogicalMesh init_logical_mesh(const NurbsGeometry& g0, const BoundaryMap& bm, const LinearSolverSettings& lin = {}) {
  const auto tab = tabulate(g0);
  const CsrMatrix K = assemble_stiffness(g0, tab);
  const std::vector<double> zero(g0.dofs(), 0.0);
  LogicalMesh lm;
  lm.logical = bm.logical;
  lm.xi0.xi = solve_dirichlet_system(apply_dirichlet(K, zero, g0, [&](const Vec2& x) { return bm(x).x; }), lin);
  lm.xi0.eta = solve_dirichlet_system(apply_dirichlet(K, zero, g0, [&](const Vec2& x) { return bm(x).y; }), lin);
  const auto gx = greville_abscissae(g0.kv_xi()), gy = greville_abscissae(g0.kv_eta());
  lm.A = Grid<Vec2>(g0.n1(), g0.n2());
  for (std::size_t j = 0; j < g0.n2(); ++j)
    for (std::size_t i = 0; i < g0.n1(); ++i)
      lm.A(i, j) = {eval_field(g0, lm.xi0.xi, gx[i], gy[j], 0).value, eval_field(g0, lm.xi0.eta, gx[i], gy[j], 0).value};
  return lm;
}

/// Monitor values at the Greville nodes, smoothed by `passes` rounds of
/// averaging each node with its grid neighbours. The nodal values become the
/// spline coefficients directly, so the smoothed monitor stays positive.
inline FieldCoefficients smoothed_monitor(const MonitorSpec& spec, const NurbsGeometry& g, const FieldCoefficients& u,
                                          int passes) {
  const auto gx = greville_abscissae(g.kv_xi()), gy = greville_abscissae(g.kv_eta());
  Grid<double> m(g.n1(), g.n2());
  for (std::size_t j = 0; j < g.n2(); ++j)
    for (std::size_t i = 0; i < g.n1(); ++i) m(i, j) = eval_monitor(spec, g, u, gx[i], gy[j]);
  for (int pass = 0; pass < passes; ++pass) {
    Grid<double> next(g.n1(), g.n2());
    for (std::size_t j = 0; j < g.n2(); ++j)
      for (std::size_t i = 0; i < g.n1(); ++i) {
        double s = m(i, j);
        int c = 1;
        if (i > 0) s += m(i - 1, j), ++c;
        if (i + 1 < g.n1()) s += m(i + 1, j), ++c;
        if (j > 0) s += m(i, j - 1), ++c;
        if (j + 1 < g.n2()) s += m(i, j + 1), ++c;
        next(i, j) = s / c;
      }
    m = std::move(next);
  }
  return FieldCoefficients(std::move(m.data()));
}

/// Solves -div(1/M grad xi) = 0, xi = bm on the boundary, for both components
/// with one shared weighted stiffness matrix. With `smoothing_passes` > 0 the
/// monitor is nodally smoothed first.
inline MapFields solve_harmonic_map(const NurbsGeometry& g, const MonitorSpec& spec, const FieldCoefficients& u,
                                    const BoundaryMap& bm, const LinearSolverSettings& lin = {}, int smoothing_passes = 0) {
  const auto tab = tabulate(g);
  CsrMatrix K;
  if (smoothing_passes > 0) {
    const FieldCoefficients ms = smoothed_monitor(spec, g, u, smoothing_passes);
    K = assemble_weighted_stiffness(g, tab, [&](const QuadPoint& qp) {
      return 1.0 / eval_field(g, ms, qp.s_xi, qp.s_eta, 0).value;
    });
  } else {
    K = assemble_weighted_stiffness(g, tab, [&](const QuadPoint& qp) {
      return 1.0 / eval_monitor(spec, g, u, qp.s_xi, qp.s_eta);
    });
  }
  const std::vector<double> zero(g.dofs(), 0.0);
  MapFields out;
  out.xi = solve_dirichlet_system(apply_dirichlet(K, zero, g, [&](const Vec2& x) { return bm(x).x; }), lin);
  out.eta = solve_dirichlet_system(apply_dirichlet(K, zero, g, [&](const Vec2& x) { return bm(x).y; }), lin);
  return out;
}

/// |J| of the physical-to-logical map below this counts as degenerate.
inline constexpr double kDegenerateJacobian = 1e-12;

struct Movement {
  Grid<Vec2> dX;              ///< zero on the boundary ring
  double xi_inf_err = 0.0;    ///< max_j |A_j - xi*(X_j)|_inf over all nodes
  std::size_t degenerate_nodes = 0;
};

/// delta A_j = A_j - xi*(X_j); delta X_j = d(x,y)/d(xi,eta) delta A_j, where
/// d(x,y)/d(xi,eta) is the inverse of the physical gradient of xi* at X_j.
/// Nodes with |J| < 1e-12 get zero movement if they are fewer than 1% of the
/// interior nodes; otherwise MeshWrapError is thrown.
inline Movement compute_movement(const NurbsGeometry& g, const MapFields& xs, const LogicalMesh& lm) {
  const auto gx = greville_abscissae(g.kv_xi()), gy = greville_abscissae(g.kv_eta());
  Movement mv;
  mv.dX = Grid<Vec2>(g.n1(), g.n2());
  std::size_t interior = 0;
  std::string first_bad;
  for (std::size_t j = 0; j < g.n2(); ++j)
    for (std::size_t i = 0; i < g.n1(); ++i) {
      const bool boundary = mv.dX.on_boundary(i, j);
      const FieldEval fx = eval_field(g, xs.xi, gx[i], gy[j], boundary ? 0 : 1);
      const FieldEval fy = eval_field(g, xs.eta, gx[i], gy[j], boundary ? 0 : 1);
      const Vec2 dA = lm.A(i, j) - Vec2{fx.value, fy.value};
      mv.xi_inf_err = std::max(mv.xi_inf_err, norm_inf(dA));
      if (boundary) continue;
      ++interior;
      // rows: (xi_x, xi_y), (eta_x, eta_y)
      const Mat2 dxi{{{{fx.grad.x, fx.grad.y}, {fy.grad.x, fy.grad.y}}}};
      const double J = dxi.det();
      if (!(std::abs(J) >= kDegenerateJacobian)) {
        if (first_bad.empty()) first_bad = "(" + std::to_string(i) + "," + std::to_string(j) + ")";
        ++mv.degenerate_nodes;
        continue;
      }
      mv.dX(i, j) = dxi.inverse() * dA;
    }
  if (mv.degenerate_nodes > 0 && 100 * mv.degenerate_nodes >= interior)
    throw MeshWrapError("compute_movement: degenerate harmonic map at " + std::to_string(mv.degenerate_nodes) +
                        " nodes, first at node " + first_bad);
  return mv;
}

struct MeshUpdate {
  NurbsGeometry geometry;
  double tau_used = 0.0;
  double min_jacobian = 0.0;
  int halvings = 0;
};

/// Targets X_j + tau dX_j, re-fit with the boundary ring pinned; tau is halved
/// (at most `max_halvings` times) until min_jacobian > 0.
inline MeshUpdate update_mesh(const NurbsGeometry& g, const Grid<Vec2>& dX, double tau, int max_halvings = 6) {
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("update_mesh: tau must lie in [0,1]");
  if (dX.n1() != g.n1() || dX.n2() != g.n2()) throw std::invalid_argument("update_mesh: movement grid size mismatch");
  for (std::size_t j = 0; j < dX.n2(); ++j)
    for (std::size_t i = 0; i < dX.n1(); ++i)
      if (dX.on_boundary(i, j) && !(dX(i, j) == Vec2{}))
        throw std::invalid_argument("update_mesh: boundary movement must be zero");
  const PhysicalMesh mesh = mesh_nodes(g);
  double t = tau;
  double last_minj = 0.0;
  for (int h = 0; h <= max_halvings; ++h, t *= 0.5) {
    Grid<Vec2> targets = mesh.nodes;
    for (std::size_t k = 0; k < targets.size(); ++k) targets[k] += t * dX[k];
    NurbsGeometry cand = refit_from_node_targets(g, targets, true);
    last_minj = min_jacobian(cand);
    if (last_minj > 0.0) return {std::move(cand), t, last_minj, h};
  }
  throw MeshWrapError("update_mesh: mesh still folded after " + std::to_string(max_halvings) +
                      " halvings of tau (min Jacobian " + std::to_string(last_minj) + ")");
}

struct PoissonProblem {
  ScalarFunction f;
  ScalarFunction bc;
  std::optional<ExactSolution> exact;
};

struct MoveMeshConfig {
  double tau = 0.5;
  double tolerance = 0.0;  ///< 0 means 1e-4 * diameter(logical)
  std::size_t max_outer = 50;
  int max_halvings = 6;
  int smoothing_passes = 0;
  Rect logical{0.0, 1.0, 0.0, 1.0};
};

enum class StopReason { Converged, MaxOuter };

struct MoveMeshState {
  NurbsGeometry initial_geometry;
  FieldCoefficients initial_u;
  std::optional<ErrorReport> initial_report;

  NurbsGeometry geometry;
  FieldCoefficients u;
  MapFields xi_star;
  LogicalMesh logical;
  std::optional<ErrorReport> final_report;

  std::vector<TraceRow> trace;
  std::size_t mesh_updates = 0;
  StopReason stop = StopReason::MaxOuter;
  double solve_seconds = 0.0;
};

/// Called after every completed outer iteration.
using IterationObserver = std::function<void(const MoveMeshState&)>;

/// The outer moving-mesh loop. The PDE is solved once on the initial mesh
/// before the loop; iteration k's re-solve provides the monitor for k+1.
inline MoveMeshState mmigm_solve(const PoissonProblem& problem, const NurbsGeometry& g0, const MonitorSpec& spec,
                                 const MoveMeshConfig& cfg = {}, const LinearSolverSettings& lin = {},
                                 const IterationObserver& observer = {}) {
  using clock = std::chrono::steady_clock;
  const double tol = cfg.tolerance > 0.0 ? cfg.tolerance : 1e-4 * cfg.logical.diameter();
  spec.effective();

  MoveMeshState st;
  double elapsed = 0.0;
  auto timed = [&elapsed](auto&& fn) {
    const auto t0 = clock::now();
    auto r = fn();
    elapsed += std::chrono::duration<double>(clock::now() - t0).count();
    return r;
  };

  const PhysicalMesh m0 = mesh_nodes(g0);
  Rect omega{m0.nodes(0, 0).x, m0.nodes(g0.n1() - 1, 0).x, m0.nodes(0, 0).y, m0.nodes(0, g0.n2() - 1).y};
  const BoundaryMap bm = make_boundary_map(omega, cfg.logical);

  st.initial_geometry = g0;
  st.geometry = g0;
  st.logical = timed([&] { return init_logical_mesh(g0, bm, lin); });
  st.u = timed([&] { return solve_poisson(g0, problem.f, problem.bc, lin); });
  st.initial_u = st.u;
  if (problem.exact) st.initial_report = error_norms(g0, st.u, *problem.exact);

  for (std::size_t it = 1; it <= cfg.max_outer; ++it) {
    st.xi_star = timed([&] { return solve_harmonic_map(st.geometry, spec, st.u, bm, lin, cfg.smoothing_passes); });
    const Movement mv = timed([&] { return compute_movement(st.geometry, st.xi_star, st.logical); });
    TraceRow row;
    row.iter = it;
    row.xi_inf_err = mv.xi_inf_err;
    if (!std::isfinite(mv.xi_inf_err)) throw SolverError(SolverError::Kind::Breakdown, "mmigm_solve: non-finite map error");
    if (mv.xi_inf_err < tol) {
      st.stop = StopReason::Converged;
      row.tau_used = 0.0;
      row.min_jacobian = min_jacobian(st.geometry);
    } else {
      MeshUpdate up = timed([&] { return update_mesh(st.geometry, mv.dX, cfg.tau, cfg.max_halvings); });
      st.geometry = std::move(up.geometry);
      ++st.mesh_updates;
      row.tau_used = up.tau_used;
      row.min_jacobian = up.min_jacobian;
      st.u = timed([&] { return solve_poisson(st.geometry, problem.f, problem.bc, lin); });
    }
    if (problem.exact) {
      const ErrorReport rep = error_norms(st.geometry, st.u, *problem.exact);
      row.L2 = rep.L2;
      row.H1 = rep.H1_semi;
      row.Linf = rep.L_inf;
    }
    row.cpu_seconds = elapsed;
    st.trace.push_back(row);
    st.solve_seconds = elapsed;
    if (observer) observer(st);
    if (st.stop == StopReason::Converged) break;
  }
  if (problem.exact) st.final_report = error_norms(st.geometry, st.u, *problem.exact);
  return st;
}

inline void export_trace(const MoveMeshState& st, const std::string& path) { export_trace(st.trace, path); }

}  // namespace mmigm
