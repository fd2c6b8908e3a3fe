#pragma once

/// Galerkin assembly over the NURBS space: weighted stiffness, load vectors,
/// Dirichlet elimination, the Poisson solve, and pointwise field evaluation
/// with physical gradients and Hessians.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mmigm/geometry.hpp"
#include "mmigm/linalg.hpp"
#include "mmigm/quadrature.hpp"

namespace mmigm {

/// Coefficients of a scalar field in the rational basis (first index fastest).
struct FieldCoefficients {
  std::vector<double> coeffs;

  FieldCoefficients() = default;
  explicit FieldCoefficients(std::size_t n, double v = 0.0) : coeffs(n, v) {}
  explicit FieldCoefficients(std::vector<double> c) : coeffs(std::move(c)) {}

  std::size_t size() const noexcept { return coeffs.size(); }
  double operator[](std::size_t k) const noexcept { return coeffs[k]; }
  double& operator[](std::size_t k) noexcept { return coeffs[k]; }
};

using ScalarFunction = std::function<double(const Vec2&)>;

/// Boundary / interior partition of the tensor-product Dofs.
struct DofMap {
  std::size_t n1 = 0, n2 = 0;
  std::vector<std::size_t> boundary;  ///< ascending
  std::vector<std::size_t> interior;  ///< ascending

  explicit DofMap(const NurbsGeometry& g) : n1(g.n1()), n2(g.n2()) {
    for (std::size_t j = 0; j < n2; ++j)
      for (std::size_t i = 0; i < n1; ++i) {
        const std::size_t k = i + n1 * j;
        (i == 0 || j == 0 || i + 1 == n1 || j + 1 == n2 ? boundary : interior).push_back(k);
      }
  }
  std::size_t total() const noexcept { return n1 * n2; }
};

/// One quadrature point of one element.
struct QuadPoint {
  std::size_t element = 0;
  double s_xi = 0, s_eta = 0;
  Vec2 x;
  double jxw = 0;  ///< |det dF| times the parametric quadrature weight
};

/// Basis data on all quadrature points of one element.
struct ElementValues {
  Element elem;
  std::vector<std::size_t> dofs;  ///< global index of each local function
  std::vector<QuadPoint> points;
  std::vector<double> value;      ///< [qp * nloc + loc]
  std::vector<Vec2> grad;         ///< physical gradients, same layout

  std::size_t nloc() const noexcept { return dofs.size(); }
};

/// Tabulates basis values and physical gradients on a (q1 x q2) Gauss rule per
/// element. Throws AssemblyError on a nonpositive Jacobian determinant.
inline std::vector<ElementValues> tabulate(const NurbsGeometry& g, int q1, int q2) {
  const QuadratureRule rx = gauss_rule(q1), ry = gauss_rule(q2);
  const auto elems = elements(g);
  std::vector<ElementValues> out;
  out.reserve(elems.size());
  for (std::size_t e = 0; e < elems.size(); ++e) {
    const Element& el = elems[e];
    ElementValues ev;
    ev.elem = el;
    const double area = el.param_area();
    bool first = true;
    for (std::size_t b = 0; b < ry.size(); ++b)
      for (std::size_t a = 0; a < rx.size(); ++a) {
        const double s = el.xi0 + (el.xi1 - el.xi0) * rx.points[a];
        const double t = el.eta0 + (el.eta1 - el.eta0) * ry.points[b];
        const NurbsEval2D R = g.basis(s, t, 1);
        if (first) {
          for (std::size_t loc = 0; loc < R.local_count(); ++loc) ev.dofs.push_back(R.global(loc, g.n1()));
          first = false;
        }
        const MapEval m = map_from_basis(g, R);
        const double det = m.jacobian.det();
        if (!(det > 0.0))
          throw AssemblyError("nonpositive Jacobian determinant " + std::to_string(det) + " in element " +
                              std::to_string(e));
        const Mat2 jinv_t = m.jacobian.inverse().transpose();
        ev.points.push_back({e, s, t, m.point, det * area * rx.weights[a] * ry.weights[b]});
        for (std::size_t loc = 0; loc < R.local_count(); ++loc) {
          ev.value.push_back(R.value[loc]);
          ev.grad.push_back(jinv_t * Vec2{R.d_xi[loc], R.d_eta[loc]});
        }
      }
    out.push_back(std::move(ev));
  }
  return out;
}

/// Assembly-order tabulation: p+1 Gauss points per direction.
inline std::vector<ElementValues> tabulate(const NurbsGeometry& g) { return tabulate(g, g.p() + 1, g.q() + 1); }

inline CsrMatrix sparsity_pattern(const std::vector<ElementValues>& tab, std::size_t ndofs) {
  std::vector<std::vector<std::size_t>> pattern(ndofs);
  for (const auto& ev : tab)
    for (std::size_t r : ev.dofs) pattern[r].insert(pattern[r].end(), ev.dofs.begin(), ev.dofs.end());
  return CsrMatrix(std::move(pattern));
}

/// A_kl = sum over quadrature of w(qp) grad phi_k . grad phi_l. `w` is any
/// callable QuadPoint -> double. Elements are merged in a fixed order, so the
/// result is bit-reproducible.
template <class WeightFn>
CsrMatrix assemble_weighted_stiffness(const NurbsGeometry& g, const std::vector<ElementValues>& tab, WeightFn&& w) {
  CsrMatrix A = sparsity_pattern(tab, g.dofs());
  std::vector<double> local;
  for (std::size_t e = 0; e < tab.size(); ++e) {
    const auto& ev = tab[e];
    const std::size_t nl = ev.nloc();
    local.assign(nl * nl, 0.0);
    for (std::size_t qp = 0; qp < ev.points.size(); ++qp) {
      const double wq = w(ev.points[qp]);
      if (!(wq > 0.0) || !std::isfinite(wq))
        throw AssemblyError("nonpositive or non-finite diffusion weight in element " + std::to_string(e));
      const double f = wq * ev.points[qp].jxw;
      const Vec2* gr = &ev.grad[qp * nl];
      for (std::size_t a = 0; a < nl; ++a)
        for (std::size_t b = a; b < nl; ++b) local[a * nl + b] += f * dot(gr[a], gr[b]);
    }
    for (std::size_t a = 0; a < nl; ++a)
      for (std::size_t b = a; b < nl; ++b) {
        A.add(ev.dofs[a], ev.dofs[b], local[a * nl + b]);
        if (b != a) A.add(ev.dofs[b], ev.dofs[a], local[a * nl + b]);
      }
  }
  return A;
}

template <class WeightFn>
CsrMatrix assemble_weighted_stiffness(const NurbsGeometry& g, WeightFn&& w) {
  return assemble_weighted_stiffness(g, tabulate(g), std::forward<WeightFn>(w));
}

/// Plain Laplacian stiffness (w = 1).
inline CsrMatrix assemble_stiffness(const NurbsGeometry& g, const std::vector<ElementValues>& tab) {
  return assemble_weighted_stiffness(g, tab, [](const QuadPoint&) { return 1.0; });
}

/// b_k = integral of f phi_k.
template <class SourceFn>
std::vector<double> assemble_load(const NurbsGeometry& g, const std::vector<ElementValues>& tab, SourceFn&& f) {
  std::vector<double> b(g.dofs(), 0.0);
  for (std::size_t e = 0; e < tab.size(); ++e) {
    const auto& ev = tab[e];
    const std::size_t nl = ev.nloc();
    for (std::size_t qp = 0; qp < ev.points.size(); ++qp) {
      const double fv = f(ev.points[qp].x);
      if (!std::isfinite(fv)) throw AssemblyError("non-finite source value in element " + std::to_string(e));
      const double c = fv * ev.points[qp].jxw;
      for (std::size_t a = 0; a < nl; ++a) b[ev.dofs[a]] += c * ev.value[qp * nl + a];
    }
  }
  return b;
}

template <class SourceFn>
std::vector<double> assemble_load(const NurbsGeometry& g, SourceFn&& f) {
  return assemble_load(g, tabulate(g), std::forward<SourceFn>(f));
}

/// Interpolates `bc` along the four boundary curves by Greville collocation of
/// each 1D rational trace. Returns a full coefficient vector with only the
/// boundary ring filled in. Corner values are interpolatory.
template <class BoundaryFn>
std::vector<double> boundary_coefficients(const NurbsGeometry& g, BoundaryFn&& bc) {
  const std::size_t n1 = g.n1(), n2 = g.n2();
  std::vector<double> c(n1 * n2, 0.0);
  const auto& w = g.weights();

  auto fit_edge = [&](bool along_xi, std::size_t fixed) {
    const KnotVector& kv = along_xi ? g.kv_xi() : g.kv_eta();
    const std::size_t n = kv.size();
    const auto gr = greville_abscissae(kv);
    const BandedMatrix B = detail::collocation_matrix(kv, gr, 0, n);
    const double tfix = fixed == 0 ? 0.0 : 1.0;
    std::vector<double> ew(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ii = along_xi ? i : (fixed == 0 ? 0 : n1 - 1);
      const std::size_t jj = along_xi ? (fixed == 0 ? 0 : n2 - 1) : i;
      ew[i] = w(ii, jj);
    }
    const std::vector<double> W = B.multiply(ew);
    std::vector<double> rhs(n);
    for (std::size_t k = 0; k < n; ++k) {
      const Vec2 x = along_xi ? map_point(g, gr[k], tfix, 0).point : map_point(g, tfix, gr[k], 0).point;
      const double v = bc(x);
      if (!std::isfinite(v)) throw AssemblyError("non-finite boundary value at boundary sample " + std::to_string(k));
      rhs[k] = W[k] * v;
    }
    const auto Q = banded_solve(B, std::move(rhs));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ii = along_xi ? i : (fixed == 0 ? 0 : n1 - 1);
      const std::size_t jj = along_xi ? (fixed == 0 ? 0 : n2 - 1) : i;
      c[ii + n1 * jj] = Q[i] / ew[i];
    }
  };
  fit_edge(false, 0);
  fit_edge(false, 1);
  fit_edge(true, 0);
  fit_edge(true, 1);
  return c;
}

/// Interior system A_II x_I = b_I - A_IB x_B after boundary elimination.
struct DirichletSystem {
  CsrMatrix A_ii;
  std::vector<double> rhs;
  std::vector<double> full;  ///< boundary coefficients filled, interior zero
  DofMap dofs;
};

template <class BoundaryFn>
DirichletSystem apply_dirichlet(const CsrMatrix& A, std::span<const double> b, const NurbsGeometry& g, BoundaryFn&& bc) {
  DofMap dm(g);
  std::vector<double> xb = boundary_coefficients(g, std::forward<BoundaryFn>(bc));
  const std::vector<double> Axb = A.multiply(xb);
  std::vector<double> rhs(dm.interior.size());
  for (std::size_t k = 0; k < dm.interior.size(); ++k) rhs[k] = b[dm.interior[k]] - Axb[dm.interior[k]];
  return DirichletSystem{A.submatrix(dm.interior), std::move(rhs), std::move(xb), std::move(dm)};
}

struct SolveStats {
  std::size_t cg_iterations = 0;
  double relative_residual = 0.0;
};

/// Solves the eliminated system and merges interior and boundary coefficients.
inline FieldCoefficients solve_dirichlet_system(const DirichletSystem& sys, const LinearSolverSettings& lin,
                                                SolveStats* stats = nullptr) {
  FieldCoefficients u(sys.full);
  if (sys.dofs.interior.empty()) return u;
  const CgResult r = cg_solve(sys.A_ii, sys.rhs, lin);
  for (std::size_t k = 0; k < sys.dofs.interior.size(); ++k) u[sys.dofs.interior[k]] = r.x[k];
  if (stats) {
    stats->cg_iterations += r.iterations;
    stats->relative_residual = std::max(stats->relative_residual, r.relative_residual);
  }
  return u;
}

/// -Laplace(u) = f in Omega, u = bc on the boundary.
template <class SourceFn, class BoundaryFn>
FieldCoefficients solve_poisson(const NurbsGeometry& g, SourceFn&& f, BoundaryFn&& bc, const LinearSolverSettings& lin = {},
                                SolveStats* stats = nullptr) {
  const auto tab = tabulate(g);
  const CsrMatrix A = assemble_stiffness(g, tab);
  const std::vector<double> b = assemble_load(g, tab, std::forward<SourceFn>(f));
  return solve_dirichlet_system(apply_dirichlet(A, b, g, std::forward<BoundaryFn>(bc)), lin, stats);
}

/// Field whose values at the Greville pairs equal `values` (tensor collocation
/// on w * c, so weights are handled exactly).
inline FieldCoefficients interpolate_at_greville(const NurbsGeometry& g, const Grid<double>& values) {
  const std::size_t n1 = g.n1(), n2 = g.n2();
  if (values.n1() != n1 || values.n2() != n2) throw std::invalid_argument("interpolate_at_greville: size mismatch");
  const auto gx = greville_abscissae(g.kv_xi()), gy = greville_abscissae(g.kv_eta());
  std::vector<double> rhs(n1 * n2);
  for (std::size_t j = 0; j < n2; ++j)
    for (std::size_t i = 0; i < n1; ++i) {
      // W(s) = sum w_ij N_i N_j
      double W = 0.0;
      const BasisEval bx = eval_basis(g.kv_xi(), gx[i], 0), by = eval_basis(g.kv_eta(), gy[j], 0);
      for (int b = 0; b <= g.q(); ++b)
        for (int a = 0; a <= g.p(); ++a)
          W += g.weights()(bx.first_index() + static_cast<std::size_t>(a), by.first_index() + static_cast<std::size_t>(b)) *
               bx(0, a) * by(0, b);
      rhs[i + n1 * j] = W * values(i, j);
    }
  const auto B1 = detail::collocation_matrix(g.kv_xi(), gx, 0, n1);
  const auto B2 = detail::collocation_matrix(g.kv_eta(), gy, 0, n2);
  auto Q = detail::tensor_solve(B1, B2, std::move(rhs));
  for (std::size_t k = 0; k < Q.size(); ++k) Q[k] /= g.weights().grid()[k];
  return FieldCoefficients(std::move(Q));
}

/// Value, physical gradient and physical Hessian of a field at a parametric point.
struct FieldEval {
  double value = 0.0;
  Vec2 grad;
  Mat2 hess;
  Vec2 x;          ///< physical point F(s)
  Mat2 jacobian;   ///< dF/ds
};

/// Gradient via J^{-T} grad_s u; Hessian via J^{-T} (H_s - sum_c u_{x_c} H_s(x_c)) J^{-1}.
/// Throws MeshWrapError when the geometry Jacobian is singular at s.
inline FieldEval eval_field(const NurbsGeometry& g, const FieldCoefficients& u, double s_xi, double s_eta, int k = 1) {
  const NurbsEval2D R = g.basis(s_xi, s_eta, std::max(k, 1));
  const MapEval m = map_from_basis(g, R);
  FieldEval out;
  out.x = m.point;
  out.jacobian = m.jacobian;
  double us = 0, ut = 0, uss = 0, ust = 0, utt = 0;
  for (std::size_t loc = 0; loc < R.local_count(); ++loc) {
    const double c = u[R.global(loc, g.n1())];
    out.value += c * R.value[loc];
    us += c * R.d_xi[loc];
    ut += c * R.d_eta[loc];
    if (k >= 2) {
      uss += c * R.d_xixi[loc];
      ust += c * R.d_xieta[loc];
      utt += c * R.d_etaeta[loc];
    }
  }
  if (k == 0) return out;
  const double det = m.jacobian.det();
  if (std::abs(det) < 1e-14) throw MeshWrapError("eval_field: singular geometry Jacobian");
  const Mat2 jinv = m.jacobian.inverse();
  const Mat2 jinv_t = jinv.transpose();
  out.grad = jinv_t * Vec2{us, ut};
  if (k >= 2) {
    Mat2 Hs{{{{uss, ust}, {ust, utt}}}};
    // subtract sum_c g_c * d2 x_c / ds_a ds_b
    const Mat2 Xx{{{{m.d_xixi.x, m.d_xieta.x}, {m.d_xieta.x, m.d_etaeta.x}}}};
    const Mat2 Xy{{{{m.d_xixi.y, m.d_xieta.y}, {m.d_xieta.y, m.d_etaeta.y}}}};
    Hs = Hs - out.grad.x * Xx;
    Hs = Hs - out.grad.y * Xy;
    out.hess = jinv_t * Hs * jinv;
  }
  return out;
}

}  // namespace mmigm
