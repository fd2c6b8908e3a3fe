#pragma once

/// Open knot vectors, B-spline / NURBS basis evaluation and Greville abscissae.
///
/// Parametric coordinates live in [0,1]. Evaluation uses the closed-interval
/// convention: t = 1 belongs to the last nonempty knot span.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmigm/types.hpp"

namespace mmigm {

class KnotVector {
 public:
  KnotVector() = default;

  /// Validates the open-knot-vector invariants; throws std::invalid_argument.
  KnotVector(int degree, std::vector<double> knots) : degree_(degree), knots_(std::move(knots)) {
    if (degree_ < 0) throw std::invalid_argument("KnotVector: negative degree");
    const auto p = static_cast<std::size_t>(degree_);
    if (knots_.size() < 2 * (p + 1))
      throw std::invalid_argument("KnotVector: need at least 2(p+1) knots");
    for (std::size_t i = 0; i + 1 < knots_.size(); ++i)
      if (!(knots_[i] <= knots_[i + 1])) throw std::invalid_argument("KnotVector: knots must be nondecreasing");
    for (std::size_t i = 0; i <= p; ++i) {
      if (knots_[i] != 0.0) throw std::invalid_argument("KnotVector: first p+1 knots must be 0");
      if (knots_[knots_.size() - 1 - i] != 1.0) throw std::invalid_argument("KnotVector: last p+1 knots must be 1");
    }
    if (knots_[p + 1] == 0.0 && knots_.size() > 2 * (p + 1))
      throw std::invalid_argument("KnotVector: knot 0 has multiplicity > p+1");
    std::size_t run = 1;
    for (std::size_t i = p + 1; i + p + 1 < knots_.size(); ++i) {
      run = (i > p + 1 && knots_[i] == knots_[i - 1]) ? run + 1 : 1;
      if (knots_[i] <= 0.0 || knots_[i] >= 1.0)
        throw std::invalid_argument("KnotVector: interior knot outside (0,1)");
      if (static_cast<int>(run) > degree_)
        throw std::invalid_argument("KnotVector: interior knot multiplicity exceeds degree");
    }
  }

  int degree() const noexcept { return degree_; }
  const std::vector<double>& knots() const noexcept { return knots_; }
  double operator[](std::size_t i) const noexcept { return knots_[i]; }

  /// Number of basis functions n = #knots - p - 1.
  std::size_t size() const noexcept { return knots_.size() - static_cast<std::size_t>(degree_) - 1; }

  /// Knot-span indices i with knots[i] < knots[i+1], i.e. the nonzero-measure elements.
  std::vector<std::size_t> nonempty_spans() const {
    std::vector<std::size_t> spans;
    for (std::size_t i = static_cast<std::size_t>(degree_); i < size(); ++i)
      if (knots_[i] < knots_[i + 1]) spans.push_back(i);
    return spans;
  }

  friend bool operator==(const KnotVector&, const KnotVector&) = default;

 private:
  int degree_ = 0;
  std::vector<double> knots_;
};

/// Uniform open knot vector on [0,1] with m spans and every interior breakpoint
/// repeated r times. r = 1 gives C^{p-1} splines (k-refinement), r = p gives C^0 (hp-refinement).
inline KnotVector make_open_knot_vector(int p, int m, int r) {
  if (p < 1) throw std::invalid_argument("make_open_knot_vector: degree must be >= 1");
  if (m < 1) throw std::invalid_argument("make_open_knot_vector: need at least one span");
  if (r < 1 || r > p) throw std::invalid_argument("make_open_knot_vector: multiplicity must lie in [1, p]");
  std::vector<double> knots(static_cast<std::size_t>(p + 1), 0.0);
  for (int k = 1; k < m; ++k)
    for (int c = 0; c < r; ++c) knots.push_back(static_cast<double>(k) / m);
  knots.insert(knots.end(), static_cast<std::size_t>(p + 1), 1.0);
  return KnotVector(p, std::move(knots));
}

/// Index i with knots[i] <= t < knots[i+1] and knots[i] < knots[i+1];
/// t = 1 maps to the last nonempty span.
inline std::size_t find_span(const KnotVector& kv, double t) {
  assert(t >= 0.0 && t <= 1.0);
  const auto p = static_cast<std::size_t>(kv.degree());
  const std::size_t n = kv.size();
  if (t >= kv[n]) return n - 1;
  if (t <= kv[p]) return p;
  // upper_bound finds the first knot > t; the span starts one before it.
  const auto& k = kv.knots();
  auto it = std::upper_bound(k.begin() + static_cast<std::ptrdiff_t>(p), k.begin() + static_cast<std::ptrdiff_t>(n) + 1, t);
  return static_cast<std::size_t>(it - k.begin()) - 1;
}

/// Nonzero basis values and derivatives at one parametric point.
struct BasisEval {
  std::size_t span = 0;
  int degree = 0;
  int max_order = 0;
  /// ders[k * (p+1) + a] = k-th derivative of N_{span-p+a,p}.
  std::vector<double> ders;

  double operator()(int order, int a) const noexcept { return ders[static_cast<std::size_t>(order * (degree + 1) + a)]; }
  std::size_t first_index() const noexcept { return span - static_cast<std::size_t>(degree); }
};

/// Nonzero B-spline values and derivatives up to order k via the triangular
/// derivative recurrence (Piegl & Tiller, A2.3). 0/0 terms are taken as 0.
inline BasisEval eval_basis(const KnotVector& kv, double t, int k) {
  const int p = kv.degree();
  if (k < 0 || k > p) throw std::invalid_argument("eval_basis: derivative order must lie in [0, p]");
  const std::size_t span = find_span(kv, t);
  const auto& U = kv.knots();
  const auto P = static_cast<std::size_t>(p + 1);

  // ndu holds basis values (upper triangle) and knot differences (lower triangle).
  std::vector<double> ndu(P * P, 0.0);
  std::vector<double> left(P, 0.0), right(P, 0.0);
  auto NDU = [&](int r, int c) -> double& { return ndu[static_cast<std::size_t>(r) * P + static_cast<std::size_t>(c)]; };
  NDU(0, 0) = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = t - U[span + 1 - static_cast<std::size_t>(j)];
    right[j] = U[span + static_cast<std::size_t>(j)] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      NDU(j, r) = right[r + 1] + left[j - r];
      const double temp = NDU(j, r) == 0.0 ? 0.0 : NDU(r, j - 1) / NDU(j, r);
      NDU(r, j) = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    NDU(j, j) = saved;
  }

  BasisEval out;
  out.span = span;
  out.degree = p;
  out.max_order = k;
  out.ders.assign(static_cast<std::size_t>(k + 1) * P, 0.0);
  auto D = [&](int order, int a) -> double& { return out.ders[static_cast<std::size_t>(order) * P + static_cast<std::size_t>(a)]; };
  for (int j = 0; j <= p; ++j) D(0, j) = NDU(j, p);

  std::vector<double> a(2 * P, 0.0);
  auto A = [&](int s, int c) -> double& { return a[static_cast<std::size_t>(s) * P + static_cast<std::size_t>(c)]; };
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    A(0, 0) = 1.0;
    for (int order = 1; order <= k; ++order) {
      double d = 0.0;
      const int rk = r - order, pk = p - order;
      if (r >= order) {
        A(s2, 0) = NDU(pk + 1, rk) == 0.0 ? 0.0 : A(s1, 0) / NDU(pk + 1, rk);
        d = A(s2, 0) * NDU(rk, pk);
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? order - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        const double den = NDU(pk + 1, rk + j);
        A(s2, j) = den == 0.0 ? 0.0 : (A(s1, j) - A(s1, j - 1)) / den;
        d += A(s2, j) * NDU(rk + j, pk);
      }
      if (r <= pk) {
        const double den = NDU(pk + 1, r);
        A(s2, order) = den == 0.0 ? 0.0 : -A(s1, order - 1) / den;
        d += A(s2, order) * NDU(r, pk);
      }
      D(order, r) = d;
      std::swap(s1, s2);
    }
  }
  double factor = p;
  for (int order = 1; order <= k; ++order) {
    for (int j = 0; j <= p; ++j) D(order, j) *= factor;
    factor *= (p - order);
  }
  return out;
}

/// Knot averages (knots[i+1] + ... + knots[i+p]) / p, one per basis function.
inline std::vector<double> greville_abscissae(const KnotVector& kv) {
  const int p = kv.degree();
  const std::size_t n = kv.size();
  std::vector<double> g(n, 0.0);
  if (p == 0) {
    for (std::size_t i = 0; i < n; ++i) g[i] = 0.5 * (kv[i] + kv[i + 1]);
    return g;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 1; j <= p; ++j) s += kv[i + static_cast<std::size_t>(j)];
    g[i] = s / p;
  }
  // Pin the endpoints so they are exactly 0 and 1 regardless of rounding.
  g.front() = 0.0;
  g.back() = 1.0;
  return g;
}

/// Positive NURBS weights on the n1 x n2 control grid.
class TensorWeights {
 public:
  TensorWeights() = default;
  TensorWeights(std::size_t n1, std::size_t n2) : w_(n1, n2, 1.0) {}
  explicit TensorWeights(Grid<double> w) : w_(std::move(w)) {
    for (double v : w_.data())
      if (!(v > 0.0)) throw std::invalid_argument("TensorWeights: weights must be positive");
  }

  std::size_t n1() const noexcept { return w_.n1(); }
  std::size_t n2() const noexcept { return w_.n2(); }
  double operator()(std::size_t i, std::size_t j) const noexcept { return w_(i, j); }
  const Grid<double>& grid() const noexcept { return w_; }
  bool all_unit() const noexcept {
    return std::all_of(w_.data().begin(), w_.data().end(), [](double v) { return v == 1.0; });
  }

  friend bool operator==(const TensorWeights&, const TensorWeights&) = default;

 private:
  Grid<double> w_;
};

/// Local values and parametric derivatives of the (p+1)(q+1) nonzero bivariate
/// rational basis functions. Local index a + (p+1) b maps to global
/// (first_i + a, first_j + b).
struct NurbsEval2D {
  int p = 0;
  int q = 0;
  std::size_t first_i = 0;
  std::size_t first_j = 0;
  std::vector<double> value;
  std::vector<double> d_xi, d_eta;
  std::vector<double> d_xixi, d_xieta, d_etaeta;

  std::size_t local_count() const noexcept { return value.size(); }
  std::size_t local_i(std::size_t loc) const noexcept { return first_i + loc % static_cast<std::size_t>(p + 1); }
  std::size_t local_j(std::size_t loc) const noexcept { return first_j + loc / static_cast<std::size_t>(p + 1); }
  /// Flat global index with the first direction fastest, given n1 basis functions in xi.
  std::size_t global(std::size_t loc, std::size_t n1) const noexcept { return local_i(loc) + n1 * local_j(loc); }
};

/// Bivariate rational basis R_ij = w_ij N_i N_j / W with derivatives up to
/// order k <= 2 obtained by the quotient rule. Orders above a direction's
/// degree are returned as zero.
inline NurbsEval2D eval_nurbs_2d(const KnotVector& kv_xi, const KnotVector& kv_eta, const TensorWeights& w,
                                 double s_xi, double s_eta, int k) {
  if (k < 0 || k > 2) throw std::invalid_argument("eval_nurbs_2d: derivative order must lie in [0, 2]");
  const int p = kv_xi.degree(), q = kv_eta.degree();
  const BasisEval bx = eval_basis(kv_xi, s_xi, std::min(k, p));
  const BasisEval by = eval_basis(kv_eta, s_eta, std::min(k, q));
  auto nx = [&](int order, int a) { return order <= bx.max_order ? bx(order, a) : 0.0; };
  auto ny = [&](int order, int b) { return order <= by.max_order ? by(order, b) : 0.0; };

  NurbsEval2D out;
  out.p = p;
  out.q = q;
  out.first_i = bx.first_index();
  out.first_j = by.first_index();
  const std::size_t count = static_cast<std::size_t>((p + 1) * (q + 1));
  out.value.resize(count);
  if (k >= 1) {
    out.d_xi.resize(count);
    out.d_eta.resize(count);
  }
  if (k >= 2) {
    out.d_xixi.resize(count);
    out.d_xieta.resize(count);
    out.d_etaeta.resize(count);
  }

  // Weighted products and the denominator W with its derivatives.
  double W = 0, Wx = 0, We = 0, Wxx = 0, Wxe = 0, Wee = 0;
  std::vector<double> wn(count), wnx(count), wne(count), wnxx(count), wnxe(count), wnee(count);
  for (int b = 0; b <= q; ++b) {
    for (int a = 0; a <= p; ++a) {
      const std::size_t loc = static_cast<std::size_t>(a + (p + 1) * b);
      const double wij = w(out.first_i + static_cast<std::size_t>(a), out.first_j + static_cast<std::size_t>(b));
      wn[loc] = wij * nx(0, a) * ny(0, b);
      W += wn[loc];
      if (k >= 1) {
        wnx[loc] = wij * nx(1, a) * ny(0, b);
        wne[loc] = wij * nx(0, a) * ny(1, b);
        Wx += wnx[loc];
        We += wne[loc];
      }
      if (k >= 2) {
        wnxx[loc] = wij * nx(2, a) * ny(0, b);
        wnxe[loc] = wij * nx(1, a) * ny(1, b);
        wnee[loc] = wij * nx(0, a) * ny(2, b);
        Wxx += wnxx[loc];
        Wxe += wnxe[loc];
        Wee += wnee[loc];
      }
    }
  }
  const bool unit = w.all_unit();
  for (std::size_t loc = 0; loc < count; ++loc) {
    const double R = unit ? wn[loc] : wn[loc] / W;
    out.value[loc] = R;
    if (k >= 1) {
      const double Rx = unit ? wnx[loc] : (wnx[loc] - R * Wx) / W;
      const double Re = unit ? wne[loc] : (wne[loc] - R * We) / W;
      out.d_xi[loc] = Rx;
      out.d_eta[loc] = Re;
      if (k >= 2) {
        out.d_xixi[loc] = unit ? wnxx[loc] : (wnxx[loc] - 2.0 * Rx * Wx - R * Wxx) / W;
        out.d_xieta[loc] = unit ? wnxe[loc] : (wnxe[loc] - Rx * We - Re * Wx - R * Wxe) / W;
        out.d_etaeta[loc] = unit ? wnee[loc] : (wnee[loc] - 2.0 * Re * We - R * Wee) / W;
      }
    }
  }
  return out;
}

}  // namespace mmigm
