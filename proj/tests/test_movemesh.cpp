#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "fd_oracle.hpp"
#include "mmigm/movemesh.hpp"
#include "mmigm/problems.hpp"

using namespace mmigm;

namespace {

NurbsGeometry square(const Rect& r, int p, int m) {
  const KnotVector kv = make_open_knot_vector(p, m, 1);
  return build_identity_geometry(r, kv, kv);
}

template <class Fn>
FieldCoefficients interpolate(const NurbsGeometry& g, Fn&& fn) {
  const PhysicalMesh mesh = mesh_nodes(g);
  Grid<double> v(g.n1(), g.n2());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = fn(mesh.nodes[k]);
  return interpolate_at_greville(g, v);
}

LogicalMesh logical_from(const NurbsGeometry& g, const MapFields& xi0, const std::function<Vec2(const Vec2&)>& a) {
  const PhysicalMesh mesh = mesh_nodes(g);
  LogicalMesh lm{{0, 1, 0, 1}, xi0, Grid<Vec2>(g.n1(), g.n2())};
  for (std::size_t k = 0; k < mesh.nodes.size(); ++k) lm.A[k] = a(mesh.nodes[k]);
  return lm;
}

std::vector<Vec2> boundary_ring(const NurbsGeometry& g) {
  std::vector<Vec2> ring;
  const auto& cp = g.control_points();
  for (std::size_t j = 0; j < cp.n2(); ++j)
    for (std::size_t i = 0; i < cp.n1(); ++i)
      if (cp.on_boundary(i, j)) ring.push_back(cp(i, j));
  return ring;
}

bool ring_equal(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (!(a[k].x == b[k].x && a[k].y == b[k].y)) return false;
  return true;
}

}  // namespace

TEST(BoundaryMap, UnitSquareIdentity) {
  const BoundaryMap bm = make_boundary_map({0, 1, 0, 1}, {0, 1, 0, 1});
  for (Vec2 x : {Vec2{0, 0}, Vec2{1, 0}, Vec2{0.3, 1}, Vec2{0, 0.7}}) {
    EXPECT_EQ(bm(x).x, x.x);
    EXPECT_EQ(bm(x).y, x.y);
  }
}

TEST(BoundaryMap, VerticesAndMidpoints) {
  const BoundaryMap bm = make_boundary_map({-1, 1, -1, 1}, {0, 1, 0, 1});
  EXPECT_DOUBLE_EQ(bm({-1, -1}).x, 0.0);
  EXPECT_DOUBLE_EQ(bm({1, 1}).y, 1.0);
  EXPECT_DOUBLE_EQ(bm({0, -1}).x, 0.5);
  EXPECT_DOUBLE_EQ(bm({0, -1}).y, 0.0);
  EXPECT_THROW(make_boundary_map({0, 0, 0, 1}, {0, 1, 0, 1}), std::invalid_argument);
}

TEST(Monitor, SpecsAndValidation) {
  const MonitorSpec g = MonitorSpec::gradient(0.1).effective();
  EXPECT_EQ(g.epsilon, 1.0);
  EXPECT_EQ(g.beta, 0.0);
  MonitorSpec bad = MonitorSpec::identity();
  bad.epsilon = 0.0;
  EXPECT_THROW(bad.effective(), std::invalid_argument);
  EXPECT_THROW(MonitorSpec::gradient(-1.0).effective(), std::invalid_argument);
}

TEST(Monitor, ConstantFieldGivesOne) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 3, 4);
  const FieldCoefficients u(g.dofs(), 2.5);
  for (const MonitorSpec& s : {MonitorSpec::gradient(0.1), MonitorSpec::hessian(0.01)})
    EXPECT_NEAR(eval_monitor(s, g, u, 0.37, 0.81), 1.0, 1e-12);
}

TEST(Monitor, LinearFieldGradient) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 3, 4);
  const FieldCoefficients u = interpolate(g, [](const Vec2& x) { return x.x; });
  EXPECT_NEAR(eval_monitor(MonitorSpec::gradient(0.1), g, u, 0.2, 0.6), std::sqrt(1.1), 1e-12);
  EXPECT_NEAR(eval_monitor(MonitorSpec::hessian(0.01), g, u, 0.2, 0.6), 1.0, 1e-10);
}

TEST(Monitor, QuadraticFieldHessian) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 3, 4);
  const FieldCoefficients u = interpolate(g, [](const Vec2& x) { return x.x * x.y; });
  // Hessian [[0,1],[1,0]], Frobenius norm^2 = 2
  EXPECT_NEAR(eval_monitor(MonitorSpec::hessian(0.5), g, u, 0.4, 0.3), std::sqrt(2.0), 1e-10);
}

TEST(Monitor, GradientMonitorPeaksAtTheLayer) {
  const ProblemDefinition pd = case2_tanh();
  const NurbsGeometry g = square(pd.domain, 3, 32);
  const FieldCoefficients u = solve_poisson(g, pd.f, pd.bc);
  // Radial profile of the monitor, binned by distance from the centre.
  const int nb = 20;
  std::vector<double> sum(nb, 0.0);
  std::vector<int> cnt(nb, 0);
  for (int j = 0; j < 64; ++j)
    for (int i = 0; i < 64; ++i) {
      const Vec2 x{(i + 0.5) / 64, (j + 0.5) / 64};
      const double r = norm(x - Vec2{0.5, 0.5});
      const int b = static_cast<int>(r / 0.025);
      if (b >= nb) continue;
      sum[b] += eval_monitor(MonitorSpec::gradient(0.1), g, u, x.x, x.y);
      ++cnt[b];
    }
  int best = 0;
  for (int b = 0; b < nb; ++b)
    if (sum[b] / cnt[b] > sum[best] / cnt[best]) best = b;
  EXPECT_GE(best * 0.025, 0.25 - 0.025 - 1e-12);
  EXPECT_LE(best * 0.025, 0.25 + 1e-12);
}

TEST(SmoothedMonitor, ZeroPassesKeepsNodalValuesAndStaysPositive) {
  const ProblemDefinition pd = case2_tanh();
  const NurbsGeometry g = square(pd.domain, 3, 16);
  const FieldCoefficients u = solve_poisson(g, pd.f, pd.bc);
  const MonitorSpec s = MonitorSpec::gradient(0.1);
  const FieldCoefficients m0 = smoothed_monitor(s, g, u, 0);
  const auto gr = greville_abscissae(g.kv_xi());
  EXPECT_DOUBLE_EQ(m0[5 + g.n1() * 7], eval_monitor(s, g, u, gr[5], gr[7]));
  const FieldCoefficients m8 = smoothed_monitor(s, g, u, 8);
  double lo0 = 1e300, hi0 = 0, lo8 = 1e300, hi8 = 0;
  for (std::size_t k = 0; k < m0.size(); ++k) {
    lo0 = std::min(lo0, m0[k]), hi0 = std::max(hi0, m0[k]);
    lo8 = std::min(lo8, m8[k]), hi8 = std::max(hi8, m8[k]);
  }
  EXPECT_GE(lo8, lo0);
  EXPECT_LE(hi8, hi0);
  for (double t : {0.013, 0.31, 0.52, 0.77, 0.999})
    EXPECT_GT(eval_field(g, m8, t, 1 - t, 0).value, 0.0);
}

TEST(LogicalMesh, IdentityGivesGrevilleNodes) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 3, 8);
  const LogicalMesh lm = init_logical_mesh(g, make_boundary_map({0, 1, 0, 1}, {0, 1, 0, 1}), {1e-13});
  const PhysicalMesh mesh = mesh_nodes(g);
  for (std::size_t k = 0; k < lm.A.size(); ++k) EXPECT_LE(norm_inf(lm.A[k] - mesh.nodes[k]), 1e-9);
}

TEST(LogicalMesh, AffineSquare) {
  const NurbsGeometry g = square({-1, 1, -1, 1}, 2, 6);
  const LogicalMesh lm = init_logical_mesh(g, make_boundary_map({-1, 1, -1, 1}, {0, 1, 0, 1}), {1e-13});
  const PhysicalMesh mesh = mesh_nodes(g);
  for (std::size_t k = 0; k < lm.A.size(); ++k) {
    EXPECT_NEAR(lm.A[k].x, (mesh.nodes[k].x + 1) / 2, 1e-9);
    EXPECT_NEAR(lm.A[k].y, (mesh.nodes[k].y + 1) / 2, 1e-9);
  }
}

TEST(HarmonicMap, UnitMonitorReproducesLogicalMesh) {
  const ProblemDefinition pd = case2_tanh();
  const NurbsGeometry g = square(pd.domain, 3, 12);
  const FieldCoefficients u = solve_poisson(g, pd.f, pd.bc);
  const BoundaryMap bm = make_boundary_map(pd.domain, {0, 1, 0, 1});
  const LinearSolverSettings lin{1e-12};
  const LogicalMesh lm = init_logical_mesh(g, bm, lin);
  const MapFields xs = solve_harmonic_map(g, MonitorSpec::identity(), u, bm, lin);
  for (std::size_t k = 0; k < g.dofs(); ++k) {
    EXPECT_NEAR(xs.xi[k], lm.xi0.xi[k], 1e-10);
    EXPECT_NEAR(xs.eta[k], lm.xi0.eta[k], 1e-10);
  }
}

TEST(HarmonicMap, InvariantUnderMonitorScaling) {
  const ProblemDefinition pd = case2_tanh();
  const NurbsGeometry g = square(pd.domain, 3, 12);
  const FieldCoefficients u = solve_poisson(g, pd.f, pd.bc);
  const BoundaryMap bm = make_boundary_map(pd.domain, {0, 1, 0, 1});
  const LinearSolverSettings lin{1e-13};
  const MapFields a = solve_harmonic_map(g, {MonitorKind::Combined, 1.0, 0.1, 0.01}, u, bm, lin);
  const MapFields b = solve_harmonic_map(g, {MonitorKind::Combined, 9.0, 0.9, 0.09}, u, bm, lin);
  for (std::size_t k = 0; k < g.dofs(); ++k) {
    EXPECT_NEAR(a.xi[k], b.xi[k], 1e-9);
    EXPECT_NEAR(a.eta[k], b.eta[k], 1e-9);
  }
}

// Layer width 0.05 keeps the weight resolved by the 32 x 32 spline space.
TEST(HarmonicMap, WeightedMapMatchesFiniteDifferences) {
  const ProblemDefinition pd = case2_tanh(0.25, 0.05);
  const NurbsGeometry g = square(pd.domain, 3, 32);
  const FieldCoefficients u = solve_poisson(g, pd.f, pd.bc);
  const BoundaryMap bm = make_boundary_map(pd.domain, {0, 1, 0, 1});
  const MonitorSpec spec = MonitorSpec::gradient(0.1);
  const MapFields xs = solve_harmonic_map(g, spec, u, bm, {1e-12});
  auto weight = [&](const Vec2& x) { return 1.0 / eval_monitor(spec, g, u, x.x, x.y); };
  const auto fd = oracle::fd_laplace(pd.domain, 257, [](const Vec2& x) { return x.x; }, weight, 1e-12);
  const PhysicalMesh mesh = mesh_nodes(g);
  double err = 0.0, moved = 0.0;
  for (std::size_t j = 1; j + 1 < g.n2(); ++j)
    for (std::size_t i = 1; i + 1 < g.n1(); ++i) {
      const double v = eval_field(g, xs.xi, mesh.params_xi[i], mesh.params_eta[j], 0).value;
      err = std::max(err, std::abs(v - fd(mesh.nodes(i, j))));
      moved = std::max(moved, std::abs(v - mesh.nodes(i, j).x));
    }
  EXPECT_LE(err, 1e-3);
  EXPECT_GT(moved, 5 * err);  // the comparison is not against a near-identity map
}

TEST(Movement, ZeroWhenMapHitsLogicalNodes) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 3, 8);
  const MapFields xs{interpolate(g, [](const Vec2& x) { return x.x; }), interpolate(g, [](const Vec2& x) { return x.y; })};
  const LogicalMesh lm = logical_from(g, xs, [](const Vec2& x) { return x; });
  const Movement mv = compute_movement(g, xs, lm);
  EXPECT_LE(mv.xi_inf_err, 1e-14);
  for (std::size_t k = 0; k < mv.dX.size(); ++k) EXPECT_LE(norm_inf(mv.dX[k]), 1e-14);
}

TEST(Movement, SingleDisplacedNode) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 3, 8);
  const MapFields xs{interpolate(g, [](const Vec2& x) { return x.x; }), interpolate(g, [](const Vec2& x) { return x.y; })};
  LogicalMesh lm = logical_from(g, xs, [](const Vec2& x) { return x; });
  lm.A(4, 5) += Vec2{0.01, 0.0};
  const Movement mv = compute_movement(g, xs, lm);
  EXPECT_NEAR(mv.dX(4, 5).x, 0.01, 1e-12);
  EXPECT_NEAR(mv.dX(4, 5).y, 0.0, 1e-12);
  EXPECT_NEAR(mv.xi_inf_err, 0.01, 1e-12);
  EXPECT_LE(norm_inf(mv.dX(3, 5)), 1e-12);
}

TEST(Movement, AffineMapUsesInverseJacobian) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 3, 8);
  const MapFields xs{interpolate(g, [](const Vec2& x) { return 2 * x.x; }),
                     interpolate(g, [](const Vec2& x) { return 4 * x.y; })};
  const LogicalMesh lm = logical_from(g, xs, [](const Vec2& x) { return Vec2{2 * x.x + 0.02, 4 * x.y + 0.04}; });
  const Movement mv = compute_movement(g, xs, lm);
  for (std::size_t j = 1; j + 1 < g.n2(); ++j)
    for (std::size_t i = 1; i + 1 < g.n1(); ++i) {
      EXPECT_NEAR(mv.dX(i, j).x, 0.01, 1e-12);
      EXPECT_NEAR(mv.dX(i, j).y, 0.01, 1e-12);
    }
  EXPECT_EQ(mv.dX(0, 3).x, 0.0);
}

TEST(Movement, GeneralAffineClosedForm) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 2, 7);
  // xi = 1.5x + 0.4y + 0.1, eta = -0.3x + 2y - 0.2; A = xi(X) + (0.03, -0.02)
  const MapFields xs{interpolate(g, [](const Vec2& x) { return 1.5 * x.x + 0.4 * x.y + 0.1; }),
                     interpolate(g, [](const Vec2& x) { return -0.3 * x.x + 2 * x.y - 0.2; })};
  const LogicalMesh lm = logical_from(g, xs, [](const Vec2& x) {
    return Vec2{1.5 * x.x + 0.4 * x.y + 0.1 + 0.03, -0.3 * x.x + 2 * x.y - 0.2 - 0.02};
  });
  const double det = 1.5 * 2 - 0.4 * -0.3;
  const Vec2 want{(2 * 0.03 - 0.4 * -0.02) / det, (0.3 * 0.03 + 1.5 * -0.02) / det};
  const Movement mv = compute_movement(g, xs, lm);
  for (std::size_t j = 1; j + 1 < g.n2(); ++j)
    for (std::size_t i = 1; i + 1 < g.n1(); ++i) EXPECT_LE(norm_inf(mv.dX(i, j) - want), 1e-10);
}

TEST(Movement, IsolatedDegenerateNodeIsSkipped) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 3, 16);
  const PhysicalMesh mesh = mesh_nodes(g);
  const Vec2 z0 = mesh.nodes(9, 9);
  // (xi + i eta) = (z - z0)^3 has |J| = 9 |z - z0|^4, zero only at z0.
  auto cube = [z0](const Vec2& x) {
    const std::complex<double> z(x.x - z0.x, x.y - z0.y);
    const auto w = z * z * z;
    return Vec2{w.real(), w.imag()};
  };
  const MapFields xs{interpolate(g, [&](const Vec2& x) { return cube(x).x; }),
                     interpolate(g, [&](const Vec2& x) { return cube(x).y; })};
  const LogicalMesh lm = logical_from(g, xs, [&](const Vec2& x) { return cube(x) + Vec2{1e-3, 0}; });
  const Movement mv = compute_movement(g, xs, lm);
  EXPECT_EQ(mv.degenerate_nodes, 1u);
  EXPECT_EQ(mv.dX(9, 9).x, 0.0);
  EXPECT_NE(mv.dX(5, 5).x, 0.0);
}

TEST(Movement, WidespreadDegeneracyThrows) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 3, 8);
  const MapFields xs{FieldCoefficients(g.dofs(), 0.5), FieldCoefficients(g.dofs(), 0.5)};
  const LogicalMesh lm = logical_from(g, xs, [](const Vec2& x) { return x; });
  EXPECT_THROW(compute_movement(g, xs, lm), MeshWrapError);
}

TEST(UpdateMesh, ZeroMovementLeavesMeshUnchanged) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 3, 8);
  const MeshUpdate up = update_mesh(g, Grid<Vec2>(g.n1(), g.n2()), 0.5);
  EXPECT_EQ(up.tau_used, 0.5);
  EXPECT_EQ(up.halvings, 0);
  for (std::size_t k = 0; k < g.dofs(); ++k)
    EXPECT_LE(norm_inf(up.geometry.control_points()[k] - g.control_points()[k]), 1e-14);
}

TEST(UpdateMesh, UniformShiftMovesHalfway) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 3, 8);
  Grid<Vec2> dX(g.n1(), g.n2());
  for (std::size_t j = 1; j + 1 < g.n2(); ++j)
    for (std::size_t i = 1; i + 1 < g.n1(); ++i) dX(i, j) = {0.01, -0.004};
  const MeshUpdate up = update_mesh(g, dX, 0.5);
  EXPECT_EQ(up.tau_used, 0.5);
  EXPECT_GT(up.min_jacobian, 0.0);
  const PhysicalMesh before = mesh_nodes(g), after = mesh_nodes(up.geometry);
  for (std::size_t k = 0; k < dX.size(); ++k)
    EXPECT_LE(norm_inf(after.nodes[k] - (before.nodes[k] + 0.5 * dX[k])), 1e-12);
  EXPECT_TRUE(ring_equal(boundary_ring(g), boundary_ring(up.geometry)));
}

TEST(UpdateMesh, FoldingStepIsHalved) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 3, 8);
  const PhysicalMesh mesh = mesh_nodes(g);
  Grid<Vec2> dX(g.n1(), g.n2());
  const double spacing = mesh.nodes(5, 5).x - mesh.nodes(4, 5).x;
  dX(5, 5) = {3 * spacing, 0.0};
  const MeshUpdate up = update_mesh(g, dX, 1.0);
  EXPECT_LT(up.tau_used, 1.0);
  EXPECT_GE(up.halvings, 1);
  EXPECT_GT(up.min_jacobian, 0.0);
}

TEST(UpdateMesh, HopelessFoldThrows) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 3, 8);
  Grid<Vec2> dX(g.n1(), g.n2());
  dX(5, 5) = {100.0, 0.0};
  EXPECT_THROW(update_mesh(g, dX, 1.0), MeshWrapError);
}

TEST(UpdateMesh, RejectsBoundaryMovementAndBadTau) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 3, 8);
  Grid<Vec2> dX(g.n1(), g.n2());
  EXPECT_THROW(update_mesh(g, dX, 1.5), std::invalid_argument);
  dX(0, 4) = {0.0, 0.01};
  EXPECT_THROW(update_mesh(g, dX, 0.5), std::invalid_argument);
}

TEST(MoveMesh, IdentityMonitorIsAFixedPoint) {
  const ProblemDefinition pd = case1_sine();
  const NurbsGeometry g = square(pd.domain, 3, 8);
  const MoveMeshState st = mmigm_solve(pd.poisson(), g, MonitorSpec::identity());
  ASSERT_EQ(st.trace.size(), 1u);
  EXPECT_EQ(st.mesh_updates, 0u);
  EXPECT_EQ(st.stop, StopReason::Converged);
  EXPECT_LE(st.trace[0].xi_inf_err, 10 * 1e-10);
  EXPECT_EQ(st.trace[0].tau_used, 0.0);
  EXPECT_TRUE(st.geometry.control_points() == g.control_points());
}

TEST(MoveMesh, BoundaryRingBitExactAndMeshValid) {
  const ProblemDefinition pd = case2_tanh();
  const NurbsGeometry g = square(pd.domain, 3, 16);
  MoveMeshConfig cfg;
  cfg.max_outer = 6;
  cfg.smoothing_passes = 16;
  const auto ring0 = boundary_ring(g);
  std::size_t calls = 0;
  const MoveMeshState st = mmigm_solve(pd.poisson(), g, MonitorSpec::gradient(0.1), cfg, {}, [&](const MoveMeshState& s) {
    ++calls;
    EXPECT_TRUE(ring_equal(ring0, boundary_ring(s.geometry))) << "iteration " << calls;
    EXPECT_GT(s.trace.back().min_jacobian, 0.0);
  });
  EXPECT_EQ(calls, st.trace.size());
  EXPECT_GE(st.mesh_updates, 1u);
  ASSERT_TRUE(st.final_report && st.initial_report);
  for (std::size_t k = 0; k < st.trace.size(); ++k) EXPECT_EQ(st.trace[k].iter, k + 1);
}

TEST(MoveMesh, WideLayerImprovesAndConverges) {
  const ProblemDefinition pd = case2_tanh(0.25, 0.05);
  const NurbsGeometry g = square(pd.domain, 3, 12);
  MoveMeshConfig cfg;
  cfg.smoothing_passes = 4;
  const MoveMeshState st = mmigm_solve(pd.poisson(), g, MonitorSpec::gradient(0.1), cfg);
  EXPECT_EQ(st.stop, StopReason::Converged);
  EXPECT_LT(st.final_report->L2, st.initial_report->L2);
  EXPECT_LT(st.trace.back().xi_inf_err, st.trace.front().xi_inf_err);
}

TEST(MoveMesh, Deterministic) {
  const ProblemDefinition pd = case2_tanh(0.25, 0.05);
  const NurbsGeometry g = square(pd.domain, 2, 10);
  MoveMeshConfig cfg;
  cfg.max_outer = 4;
  const MoveMeshState a = mmigm_solve(pd.poisson(), g, MonitorSpec::gradient(0.1), cfg);
  const MoveMeshState b = mmigm_solve(pd.poisson(), g, MonitorSpec::gradient(0.1), cfg);
  EXPECT_TRUE(a.geometry.control_points() == b.geometry.control_points());
  EXPECT_EQ(a.u.coeffs, b.u.coeffs);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    EXPECT_EQ(a.trace[k].xi_inf_err, b.trace[k].xi_inf_err);
    EXPECT_EQ(a.trace[k].L2, b.trace[k].L2);
  }
}
