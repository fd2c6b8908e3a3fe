#pragma once

/// Tensor-product NURBS geometry map F: [0,1]^2 -> Omega, physical mesh nodes
/// (Greville images), validity checks and control-net re-fitting.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mmigm/linalg.hpp"
#include "mmigm/quadrature.hpp"
#include "mmigm/splines.hpp"
#include "mmigm/types.hpp"

namespace mmigm {

class NurbsGeometry {
 public:
  NurbsGeometry() = default;
  NurbsGeometry(KnotVector kv_xi, KnotVector kv_eta, TensorWeights weights, Grid<Vec2> control_points)
      : kv_xi_(std::move(kv_xi)), kv_eta_(std::move(kv_eta)), w_(std::move(weights)), cp_(std::move(control_points)) {
    if (w_.n1() != kv_xi_.size() || w_.n2() != kv_eta_.size())
      throw std::invalid_argument("NurbsGeometry: weight grid does not match basis dimensions");
    if (cp_.n1() != kv_xi_.size() || cp_.n2() != kv_eta_.size())
      throw std::invalid_argument("NurbsGeometry: control grid does not match basis dimensions");
  }

  const KnotVector& kv_xi() const noexcept { return kv_xi_; }
  const KnotVector& kv_eta() const noexcept { return kv_eta_; }
  const TensorWeights& weights() const noexcept { return w_; }
  const Grid<Vec2>& control_points() const noexcept { return cp_; }

  std::size_t n1() const noexcept { return kv_xi_.size(); }
  std::size_t n2() const noexcept { return kv_eta_.size(); }
  std::size_t dofs() const noexcept { return n1() * n2(); }
  int p() const noexcept { return kv_xi_.degree(); }
  int q() const noexcept { return kv_eta_.degree(); }

  NurbsEval2D basis(double s_xi, double s_eta, int k) const {
    return eval_nurbs_2d(kv_xi_, kv_eta_, w_, s_xi, s_eta, k);
  }

  NurbsGeometry with_control_points(Grid<Vec2> cp) const { return NurbsGeometry(kv_xi_, kv_eta_, w_, std::move(cp)); }

 private:
  KnotVector kv_xi_, kv_eta_;
  TensorWeights w_;
  Grid<Vec2> cp_;
};

/// Image point, Jacobian d(x,y)/d(xi,eta) (rows x,y; columns xi,eta) and,
/// when requested, second parametric derivatives of F.
struct MapEval {
  Vec2 point;
  Mat2 jacobian;
  Vec2 d_xixi, d_xieta, d_etaeta;
};

/// Sums a precomputed basis evaluation against the control net.
inline MapEval map_from_basis(const NurbsGeometry& g, const NurbsEval2D& R) {
  MapEval out;
  const auto& cp = g.control_points();
  const bool d1 = !R.d_xi.empty(), d2 = !R.d_xixi.empty();
  for (std::size_t loc = 0; loc < R.local_count(); ++loc) {
    const Vec2& P = cp(R.local_i(loc), R.local_j(loc));
    out.point += R.value[loc] * P;
    if (d1) {
      out.jacobian(0, 0) += R.d_xi[loc] * P.x;
      out.jacobian(0, 1) += R.d_eta[loc] * P.x;
      out.jacobian(1, 0) += R.d_xi[loc] * P.y;
      out.jacobian(1, 1) += R.d_eta[loc] * P.y;
    }
    if (d2) {
      out.d_xixi += R.d_xixi[loc] * P;
      out.d_xieta += R.d_xieta[loc] * P;
      out.d_etaeta += R.d_etaeta[loc] * P;
    }
  }
  return out;
}

inline MapEval map_point(const NurbsGeometry& g, double s_xi, double s_eta, int k = 1) {
  return map_from_basis(g, g.basis(s_xi, s_eta, k));
}

/// Unit weights and control points at affinely scaled Greville pairs, so F is
/// exactly the affine map [0,1]^2 -> rect (linear reproduction of splines).
inline NurbsGeometry build_identity_geometry(const Rect& rect, const KnotVector& kv_xi, const KnotVector& kv_eta) {
  if (!(rect.xmax > rect.xmin) || !(rect.ymax > rect.ymin))
    throw std::invalid_argument("build_identity_geometry: degenerate rectangle");
  const auto gx = greville_abscissae(kv_xi);
  const auto gy = greville_abscissae(kv_eta);
  Grid<Vec2> cp(gx.size(), gy.size());
  for (std::size_t j = 0; j < gy.size(); ++j)
    for (std::size_t i = 0; i < gx.size(); ++i)
      cp(i, j) = {rect.xmin + rect.width() * gx[i], rect.ymin + rect.height() * gy[j]};
  return NurbsGeometry(kv_xi, kv_eta, TensorWeights(gx.size(), gy.size()), std::move(cp));
}

/// A nonzero-measure knot-span rectangle [xi0,xi1] x [eta0,eta1].
struct Element {
  std::size_t span_xi = 0, span_eta = 0;
  double xi0 = 0, xi1 = 0, eta0 = 0, eta1 = 0;
  double param_area() const noexcept { return (xi1 - xi0) * (eta1 - eta0); }
};

/// Elements ordered with xi fastest.
inline std::vector<Element> elements(const NurbsGeometry& g) {
  std::vector<Element> out;
  const auto sx = g.kv_xi().nonempty_spans();
  const auto sy = g.kv_eta().nonempty_spans();
  out.reserve(sx.size() * sy.size());
  for (std::size_t b : sy)
    for (std::size_t a : sx) out.push_back({a, b, g.kv_xi()[a], g.kv_xi()[a + 1], g.kv_eta()[b], g.kv_eta()[b + 1]});
  return out;
}

struct PhysicalMesh {
  std::vector<double> params_xi, params_eta;  ///< Greville abscissae
  Grid<Vec2> nodes;                           ///< F at the Greville pairs
  std::vector<Element> elements;              ///< parametric parents
  std::vector<std::array<Vec2, 4>> element_corners;  ///< physical images, counterclockwise
};

inline PhysicalMesh mesh_nodes(const NurbsGeometry& g) {
  PhysicalMesh mesh;
  mesh.params_xi = greville_abscissae(g.kv_xi());
  mesh.params_eta = greville_abscissae(g.kv_eta());
  mesh.nodes = Grid<Vec2>(g.n1(), g.n2());
  for (std::size_t j = 0; j < g.n2(); ++j)
    for (std::size_t i = 0; i < g.n1(); ++i)
      mesh.nodes(i, j) = map_point(g, mesh.params_xi[i], mesh.params_eta[j], 0).point;
  mesh.elements = elements(g);
  for (const auto& e : mesh.elements) {
    mesh.element_corners.push_back({map_point(g, e.xi0, e.eta0, 0).point, map_point(g, e.xi1, e.eta0, 0).point,
                                    map_point(g, e.xi1, e.eta1, 0).point, map_point(g, e.xi0, e.eta1, 0).point});
  }
  return mesh;
}

namespace detail {

/// Collocation matrix B[k][i] = N_i(params[k]) restricted to rows/columns [lo, hi).
inline BandedMatrix collocation_matrix(const KnotVector& kv, const std::vector<double>& params, std::size_t lo,
                                       std::size_t hi) {
  const auto p = static_cast<std::size_t>(kv.degree());
  BandedMatrix B(hi - lo, p, p);
  for (std::size_t k = lo; k < hi; ++k) {
    const BasisEval be = eval_basis(kv, params[k], 0);
    for (std::size_t a = 0; a <= p; ++a) {
      const std::size_t i = be.first_index() + a;
      if (i < lo || i >= hi || be(0, static_cast<int>(a)) == 0.0) continue;
      if (!B.in_band(k - lo, i - lo)) throw std::logic_error("collocation_matrix: entry outside band");
      B(k - lo, i - lo) = be(0, static_cast<int>(a));
    }
  }
  return B;
}

/// Solves B1 X B2^T = R for an n1 x n2 grid X (first index fastest).
inline std::vector<double> tensor_solve(const BandedMatrix& B1, const BandedMatrix& B2, std::vector<double> R) {
  const std::size_t n1 = B1.size(), n2 = B2.size();
  // Columns of R along the first index are contiguous: one batched solve.
  std::vector<double> Z = banded_solve(B1, std::move(R), n2);
  std::vector<double> T(n1 * n2);
  for (std::size_t j = 0; j < n2; ++j)
    for (std::size_t i = 0; i < n1; ++i) T[j + n2 * i] = Z[i + n1 * j];
  std::vector<double> Y = banded_solve(B2, std::move(T), n1);
  std::vector<double> X(n1 * n2);
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) X[i + n1 * j] = Y[j + n2 * i];
  return X;
}

}  // namespace detail

/// Re-fits the control net so that F*(greville_i, greville_j) = targets(i,j).
/// Weights are kept. Solved on Q = w P, which turns the rational collocation
/// into two tensor-product B-spline collocations. With `pin_boundary` the outer
/// ring of control points is kept bit-for-bit and only interior points are
/// solved for (valid when boundary targets equal the current boundary nodes).
inline NurbsGeometry refit_from_node_targets(const NurbsGeometry& g, const Grid<Vec2>& targets, bool pin_boundary = true) {
  const std::size_t n1 = g.n1(), n2 = g.n2();
  if (targets.n1() != n1 || targets.n2() != n2)
    throw std::invalid_argument("refit_from_node_targets: target grid does not match basis dimensions");
  const auto gx = greville_abscissae(g.kv_xi());
  const auto gy = greville_abscissae(g.kv_eta());
  const auto& w = g.weights();

  // W at every Greville pair; right-hand side is W * target.
  const BandedMatrix B1 = detail::collocation_matrix(g.kv_xi(), gx, 0, n1);
  const BandedMatrix B2 = detail::collocation_matrix(g.kv_eta(), gy, 0, n2);
  Grid<double> Wg(n1, n2, 1.0);
  if (!w.all_unit()) {
    std::vector<double> wv(w.grid().data());
    // W(gx_k, gy_l) = sum_ij B1[k][i] B2[l][j] w_ij
    std::vector<double> tmp(n1 * n2, 0.0);
    for (std::size_t j = 0; j < n2; ++j) {
      const auto col = B1.multiply(std::span<const double>(wv.data() + j * n1, n1));
      std::copy(col.begin(), col.end(), tmp.begin() + static_cast<std::ptrdiff_t>(j * n1));
    }
    for (std::size_t k = 0; k < n1; ++k) {
      std::vector<double> row(n2);
      for (std::size_t j = 0; j < n2; ++j) row[j] = tmp[k + n1 * j];
      const auto out = B2.multiply(row);
      for (std::size_t l = 0; l < n2; ++l) Wg(k, l) = out[l];
    }
  }

  Grid<Vec2> cp = g.control_points();
  if (!pin_boundary || n1 < 3 || n2 < 3) {
    for (int comp = 0; comp < 2; ++comp) {
      std::vector<double> R(n1 * n2);
      for (std::size_t k = 0; k < n1 * n2; ++k) R[k] = Wg[k] * (comp == 0 ? targets[k].x : targets[k].y);
      const auto Q = detail::tensor_solve(B1, B2, std::move(R));
      for (std::size_t k = 0; k < n1 * n2; ++k) (comp == 0 ? cp[k].x : cp[k].y) = Q[k] / w.grid()[k];
    }
    return g.with_control_points(std::move(cp));
  }

  // Interior unknowns: subtract the contribution of the fixed boundary ring.
  const BandedMatrix B1i = detail::collocation_matrix(g.kv_xi(), gx, 1, n1 - 1);
  const BandedMatrix B2i = detail::collocation_matrix(g.kv_eta(), gy, 1, n2 - 1);
  const std::size_t m1 = n1 - 2, m2 = n2 - 2;
  for (int comp = 0; comp < 2; ++comp) {
    std::vector<double> Qb(n1 * n2, 0.0);
    for (std::size_t j = 0; j < n2; ++j)
      for (std::size_t i = 0; i < n1; ++i)
        if (cp.on_boundary(i, j)) Qb[i + n1 * j] = w(i, j) * (comp == 0 ? cp(i, j).x : cp(i, j).y);
    // B1 Qb B2^T
    std::vector<double> tmp(n1 * n2, 0.0), boundary_part(n1 * n2, 0.0);
    for (std::size_t j = 0; j < n2; ++j) {
      const auto col = B1.multiply(std::span<const double>(Qb.data() + j * n1, n1));
      std::copy(col.begin(), col.end(), tmp.begin() + static_cast<std::ptrdiff_t>(j * n1));
    }
    for (std::size_t k = 0; k < n1; ++k) {
      std::vector<double> row(n2);
      for (std::size_t j = 0; j < n2; ++j) row[j] = tmp[k + n1 * j];
      const auto out = B2.multiply(row);
      for (std::size_t l = 0; l < n2; ++l) boundary_part[k + n1 * l] = out[l];
    }
    std::vector<double> R(m1 * m2);
    for (std::size_t l = 1; l + 1 < n2; ++l)
      for (std::size_t k = 1; k + 1 < n1; ++k) {
        const double t = comp == 0 ? targets(k, l).x : targets(k, l).y;
        R[(k - 1) + m1 * (l - 1)] = Wg(k, l) * t - boundary_part[k + n1 * l];
      }
    const auto Q = detail::tensor_solve(B1i, B2i, std::move(R));
    for (std::size_t l = 1; l + 1 < n2; ++l)
      for (std::size_t k = 1; k + 1 < n1; ++k)
        (comp == 0 ? cp(k, l).x : cp(k, l).y) = Q[(k - 1) + m1 * (l - 1)] / w(k, l);
  }
  return g.with_control_points(std::move(cp));
}

/// Smallest det(dF) over every element, sampled at the element corners and at
/// the points of both the (p+1)- and (p+2)-point Gauss rules in each direction,
/// which covers every point assembly and error evaluation touch. Folding
/// between sample points is not detected.
inline double min_jacobian(const NurbsGeometry& g) {
  auto samples = [](int order) {
    std::vector<double> t{0.0, 1.0};
    for (int q : {order + 1, order + 2}) {
      const QuadratureRule r = gauss_rule(q);
      t.insert(t.end(), r.points.begin(), r.points.end());
    }
    return t;
  };
  const std::vector<double> sx = samples(g.p()), sy = samples(g.q());
  double m = std::numeric_limits<double>::infinity();
  for (const auto& e : elements(g))
    for (double b : sy)
      for (double a : sx) {
        const double s = e.xi0 + (e.xi1 - e.xi0) * a;
        const double t = e.eta0 + (e.eta1 - e.eta0) * b;
        m = std::min(m, map_point(g, s, t, 1).jacobian.det());
      }
  return m;
}

}  // namespace mmigm
