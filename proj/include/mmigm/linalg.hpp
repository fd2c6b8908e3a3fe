#pragma once

/// Compressed-row sparse matrices, preconditioned conjugate gradients and
/// banded LU for collocation systems.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mmigm/types.hpp"

namespace mmigm {

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

/// Square sparse matrix in compressed row storage. Column indices within a
/// row are strictly increasing.
class CsrMatrix {
 public:
  CsrMatrix() = default;

  /// Builds a zero-valued matrix from per-row column lists (sorted and deduplicated here).
  explicit CsrMatrix(std::vector<std::vector<std::size_t>> pattern) : n_(pattern.size()) {
    row_ptr_.assign(n_ + 1, 0);
    for (std::size_t r = 0; r < n_; ++r) {
      auto& cols = pattern[r];
      std::sort(cols.begin(), cols.end());
      cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
      row_ptr_[r + 1] = row_ptr_[r] + cols.size();
    }
    col_.reserve(row_ptr_.back());
    for (auto& cols : pattern) col_.insert(col_.end(), cols.begin(), cols.end());
    val_.assign(col_.size(), 0.0);
  }

  std::size_t rows() const noexcept { return n_; }
  std::size_t nonzeros() const noexcept { return val_.size(); }
  const std::vector<std::size_t>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<std::size_t>& col() const noexcept { return col_; }
  const std::vector<double>& values() const noexcept { return val_; }
  std::vector<double>& values() noexcept { return val_; }

  /// Position of (r,c) in the value array, or npos if structurally zero.
  std::size_t find(std::size_t r, std::size_t c) const noexcept {
    const auto b = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
    const auto e = col_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
    const auto it = std::lower_bound(b, e, c);
    return (it != e && *it == c) ? static_cast<std::size_t>(it - col_.begin()) : npos;
  }

  double at(std::size_t r, std::size_t c) const noexcept {
    const std::size_t k = find(r, c);
    return k == npos ? 0.0 : val_[k];
  }

  void add(std::size_t r, std::size_t c, double v) noexcept {
    const std::size_t k = find(r, c);
    assert(k != npos);
    val_[k] += v;
  }

  void multiply(std::span<const double> x, std::span<double> y) const noexcept {
    for (std::size_t r = 0; r < n_; ++r) {
      double s = 0.0;
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += val_[k] * x[col_[k]];
      y[r] = s;
    }
  }

  std::vector<double> multiply(std::span<const double> x) const {
    std::vector<double> y(n_);
    multiply(x, y);
    return y;
  }

  std::vector<double> diagonal() const {
    std::vector<double> d(n_, 0.0);
    for (std::size_t r = 0; r < n_; ++r) d[r] = at(r, r);
    return d;
  }

  double max_abs() const noexcept {
    double m = 0.0;
    for (double v : val_) m = std::max(m, std::abs(v));
    return m;
  }

  /// max |A_rc - A_cr| over stored entries.
  double asymmetry() const noexcept {
    double m = 0.0;
    for (std::size_t r = 0; r < n_; ++r)
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) m = std::max(m, std::abs(val_[k] - at(col_[k], r)));
    return m;
  }

  CsrMatrix& operator*=(double s) noexcept {
    for (double& v : val_) v *= s;
    return *this;
  }

  /// Principal submatrix on `keep` (ascending global indices).
  CsrMatrix submatrix(std::span<const std::size_t> keep) const {
    std::vector<std::size_t> local(n_, npos);
    for (std::size_t k = 0; k < keep.size(); ++k) local[keep[k]] = k;
    std::vector<std::vector<std::size_t>> pattern(keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k)
      for (std::size_t e = row_ptr_[keep[k]]; e < row_ptr_[keep[k] + 1]; ++e)
        if (local[col_[e]] != npos) pattern[k].push_back(local[col_[e]]);
    CsrMatrix sub(std::move(pattern));
    for (std::size_t k = 0; k < keep.size(); ++k)
      for (std::size_t e = row_ptr_[keep[k]]; e < row_ptr_[keep[k] + 1]; ++e)
        if (local[col_[e]] != npos) sub.add(k, local[col_[e]], val_[e]);
    return sub;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_;
  std::vector<double> val_;
};

enum class Preconditioner { None, Diagonal };

struct LinearSolverSettings {
  double tol = 1e-10;       ///< relative residual target ||b - Ax|| <= tol ||b||
  std::size_t maxit = 0;    ///< 0 means 10 * (number of unknowns)
  Preconditioner precond = Preconditioner::Diagonal;
};

struct CgResult {
  std::vector<double> x;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
};

/// Preconditioned conjugate gradients for SPD A starting from x0 (zero if empty).
/// `observer`, if set, sees every iterate (including the start).
inline CgResult cg_solve(const CsrMatrix& A, std::span<const double> b, const LinearSolverSettings& settings = {},
                         std::span<const double> x0 = {},
                         const std::function<void(std::size_t, std::span<const double>)>& observer = {}) {
  const std::size_t n = A.rows();
  if (!(settings.tol > 0.0)) throw std::invalid_argument("cg_solve: tolerance must be positive");
  const std::size_t maxit = settings.maxit ? settings.maxit : 10 * std::max<std::size_t>(n, 1);

  CgResult res;
  res.x.assign(n, 0.0);
  if (!x0.empty()) std::copy(x0.begin(), x0.end(), res.x.begin());
  const double bnorm = norm2(b);
  if (n == 0 || bnorm == 0.0) {
    if (bnorm == 0.0) std::fill(res.x.begin(), res.x.end(), 0.0);
    if (observer) observer(0, res.x);
    return res;
  }

  std::vector<double> inv_diag(n, 1.0);
  if (settings.precond == Preconditioner::Diagonal) {
    const auto d = A.diagonal();
    for (std::size_t i = 0; i < n; ++i) {
      if (!(d[i] > 0.0))
        throw SolverError(SolverError::Kind::Breakdown, "cg_solve: nonpositive diagonal entry at row " + std::to_string(i));
      inv_diag[i] = 1.0 / d[i];
    }
  }

  std::vector<double> r(n), z(n), p(n), Ap(n);
  A.multiply(res.x, Ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - Ap[i];
  for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  p = z;
  double rz = dot(r, z);
  double rnorm = norm2(r);
  if (observer) observer(0, res.x);

  std::size_t it = 0;
  while (rnorm > settings.tol * bnorm) {
    if (it >= maxit) {
      throw SolverError(SolverError::Kind::NotConverged,
                        "cg_solve: no convergence after " + std::to_string(maxit) +
                            " iterations (relative residual " + std::to_string(rnorm / bnorm) + ")");
    }
    A.multiply(p, Ap);
    const double curvature = dot(p, Ap);
    if (!(curvature > 0.0))
      throw SolverError(SolverError::Kind::Breakdown, "cg_solve: nonpositive curvature p^T A p at iteration " +
                                                          std::to_string(it));
    const double alpha = rz / curvature;
    for (std::size_t i = 0; i < n; ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    ++it;
    if (observer) observer(it, res.x);
    rnorm = norm2(r);
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  res.iterations = it;
  res.relative_residual = rnorm / bnorm;
  return res;
}

/// Square banded matrix with `lower` sub- and `upper` super-diagonals.
class BandedMatrix {
 public:
  BandedMatrix(std::size_t n, std::size_t lower, std::size_t upper)
      : n_(n), kl_(lower), ku_(upper), band_(n * (lower + upper + 1), 0.0) {}

  std::size_t size() const noexcept { return n_; }
  std::size_t lower() const noexcept { return kl_; }
  std::size_t upper() const noexcept { return ku_; }

  bool in_band(std::size_t r, std::size_t c) const noexcept { return c + kl_ >= r && c <= r + ku_; }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    assert(in_band(r, c));
    return band_[r * (kl_ + ku_ + 1) + (c + kl_ - r)];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return in_band(r, c) ? band_[r * (kl_ + ku_ + 1) + (c + kl_ - r)] : 0.0;
  }

  std::vector<double> multiply(std::span<const double> x) const {
    std::vector<double> y(n_, 0.0);
    for (std::size_t r = 0; r < n_; ++r) {
      const std::size_t c0 = r > kl_ ? r - kl_ : 0;
      const std::size_t c1 = std::min(n_ - 1, r + ku_);
      for (std::size_t c = c0; c <= c1; ++c) y[r] += (*this)(r, c) * x[c];
    }
    return y;
  }

 private:
  std::size_t n_, kl_, ku_;
  std::vector<double> band_;
};

/// LU factorization without pivoting (stable for totally positive collocation
/// matrices) followed by solves for each column of `rhs` (n x nrhs, column-major:
/// rhs[c * n + r]). Throws SolverError::Singular on a vanishing pivot.
inline std::vector<double> banded_solve(BandedMatrix B, std::vector<double> rhs, std::size_t nrhs = 1) {
  const std::size_t n = B.size();
  if (rhs.size() != n * nrhs) throw std::invalid_argument("banded_solve: rhs size mismatch");
  const std::size_t kl = B.lower(), ku = B.upper();
  double scale = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = (r > kl ? r - kl : 0); c <= std::min(n - 1, r + ku); ++c) scale = std::max(scale, std::abs(B(r, c)));
  if (scale == 0.0 && n > 0) throw SolverError(SolverError::Kind::Singular, "banded_solve: zero matrix");

  for (std::size_t k = 0; k < n; ++k) {
    const double pivot = B(k, k);
    if (std::abs(pivot) <= 1e-14 * scale)
      throw SolverError(SolverError::Kind::Singular, "banded_solve: singular pivot at row " + std::to_string(k));
    const std::size_t rmax = std::min(n - 1, k + kl);
    const std::size_t cmax = std::min(n - 1, k + ku);
    for (std::size_t r = k + 1; r <= rmax; ++r) {
      const double l = B(r, k) / pivot;
      if (l == 0.0) continue;
      B(r, k) = l;
      for (std::size_t c = k + 1; c <= cmax; ++c) B(r, c) -= l * B(k, c);
    }
  }
  for (std::size_t col = 0; col < nrhs; ++col) {
    double* x = rhs.data() + col * n;
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t c0 = r > kl ? r - kl : 0;
      for (std::size_t c = c0; c < r; ++c) x[r] -= B(r, c) * x[c];
    }
    for (std::size_t r = n; r-- > 0;) {
      const std::size_t c1 = std::min(n - 1, r + ku);
      for (std::size_t c = r + 1; c <= c1; ++c) x[r] -= B(r, c) * x[c];
      x[r] /= B(r, r);
    }
  }
  return rhs;
}

}  // namespace mmigm
