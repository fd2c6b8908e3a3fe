#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmigm {

/// Point or vector in the plane.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(const Vec2& o) noexcept {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2& operator-=(const Vec2& o) noexcept {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Vec2& operator*=(double s) noexcept {
    x *= s;
    y *= s;
    return *this;
  }
  friend constexpr Vec2 operator+(Vec2 a, const Vec2& b) noexcept { return a += b; }
  friend constexpr Vec2 operator-(Vec2 a, const Vec2& b) noexcept { return a -= b; }
  friend constexpr Vec2 operator*(double s, Vec2 a) noexcept { return a *= s; }
  friend constexpr Vec2 operator*(Vec2 a, double s) noexcept { return a *= s; }
  friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

inline double norm(const Vec2& v) noexcept { return std::hypot(v.x, v.y); }
inline double norm_inf(const Vec2& v) noexcept { return std::max(std::abs(v.x), std::abs(v.y)); }
constexpr double dot(const Vec2& a, const Vec2& b) noexcept { return a.x * b.x + a.y * b.y; }

/// Row-major 2x2 matrix, m[r][c].
struct Mat2 {
  std::array<std::array<double, 2>, 2> m{};

  static constexpr Mat2 identity() noexcept { return Mat2{{{{1.0, 0.0}, {0.0, 1.0}}}}; }
  static constexpr Mat2 diag(double a, double b) noexcept { return Mat2{{{{a, 0.0}, {0.0, b}}}}; }

  constexpr double& operator()(int r, int c) noexcept { return m[r][c]; }
  constexpr double operator()(int r, int c) const noexcept { return m[r][c]; }

  constexpr double det() const noexcept { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }

  constexpr Mat2 transpose() const noexcept {
    return Mat2{{{{m[0][0], m[1][0]}, {m[0][1], m[1][1]}}}};
  }

  /// Adjugate divided by the determinant; caller guards against det == 0.
  constexpr Mat2 inverse() const noexcept {
    const double d = det();
    return Mat2{{{{m[1][1] / d, -m[0][1] / d}, {-m[1][0] / d, m[0][0] / d}}}};
  }

  friend constexpr Vec2 operator*(const Mat2& a, const Vec2& v) noexcept {
    return {a.m[0][0] * v.x + a.m[0][1] * v.y, a.m[1][0] * v.x + a.m[1][1] * v.y};
  }
  friend constexpr Mat2 operator*(const Mat2& a, const Mat2& b) noexcept {
    Mat2 r;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) r.m[i][j] = a.m[i][0] * b.m[0][j] + a.m[i][1] * b.m[1][j];
    return r;
  }
  friend constexpr Mat2 operator-(const Mat2& a, const Mat2& b) noexcept {
    Mat2 r;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) r.m[i][j] = a.m[i][j] - b.m[i][j];
    return r;
  }
  friend constexpr Mat2 operator*(double s, const Mat2& a) noexcept {
    Mat2 r;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) r.m[i][j] = s * a.m[i][j];
    return r;
  }

  double frobenius() const noexcept {
    return std::sqrt(m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]);
  }
};

/// Dense n1 x n2 grid stored with the first index fastest: flat index = i + n1 * j.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t n1, std::size_t n2, const T& init = T{}) : n1_(n1), n2_(n2), data_(n1 * n2, init) {}

  std::size_t n1() const noexcept { return n1_; }
  std::size_t n2() const noexcept { return n2_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t i, std::size_t j) noexcept {
    assert(i < n1_ && j < n2_);
    return data_[i + n1_ * j];
  }
  const T& operator()(std::size_t i, std::size_t j) const noexcept {
    assert(i < n1_ && j < n2_);
    return data_[i + n1_ * j];
  }
  T& operator[](std::size_t k) noexcept { return data_[k]; }
  const T& operator[](std::size_t k) const noexcept { return data_[k]; }

  bool on_boundary(std::size_t i, std::size_t j) const noexcept {
    return i == 0 || j == 0 || i + 1 == n1_ || j + 1 == n2_;
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t n1_ = 0;
  std::size_t n2_ = 0;
  std::vector<T> data_;
};

/// Axis-aligned rectangle [xmin,xmax] x [ymin,ymax].
struct Rect {
  double xmin = 0.0;
  double xmax = 1.0;
  double ymin = 0.0;
  double ymax = 1.0;

  double width() const noexcept { return xmax - xmin; }
  double height() const noexcept { return ymax - ymin; }
  double area() const noexcept { return width() * height(); }
  double diameter() const noexcept { return std::hypot(width(), height()); }
};

// Failure categories. The CLI maps them onto exit codes.

/// Assembly hit an invalid coefficient or source value.
class AssemblyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Linear solver did not converge or broke down.
class SolverError : public std::runtime_error {
 public:
  enum class Kind { NotConverged, Breakdown, Singular };
  SolverError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Mesh lost validity (nonpositive Jacobian) or the harmonic map degenerated.
class MeshWrapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mmigm
