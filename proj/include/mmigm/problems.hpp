#pragma once

/// Model problems with known solutions, and a small expression language for
/// user-supplied manufactured solutions.

#include <cctype>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmigm/movemesh.hpp"
#include "mmigm/postproc.hpp"
#include "mmigm/types.hpp"

namespace mmigm {

struct ProblemDefinition {
  std::string name;
  Rect domain;
  ScalarFunction f;
  ScalarFunction bc;
  ExactSolution exact;

  PoissonProblem poisson() const { return {f, bc, exact}; }
};

/// u = sin x sin y on [-1,1]^2, f = 2 sin x sin y.
inline ProblemDefinition case1_sine() {
  ProblemDefinition p;
  p.name = "case1_sine";
  p.domain = {-1.0, 1.0, -1.0, 1.0};
  p.exact.u = [](const Vec2& x) { return std::sin(x.x) * std::sin(x.y); };
  p.exact.grad = [](const Vec2& x) {
    return Vec2{std::cos(x.x) * std::sin(x.y), std::sin(x.x) * std::cos(x.y)};
  };
  p.f = [](const Vec2& x) { return 2.0 * std::sin(x.x) * std::sin(x.y); };
  p.bc = p.exact.u;
  return p;
}

namespace detail {

/// sech^2(s) without the cancellation of 1 - tanh^2 for large |s|.
inline double sech2(double s) {
  const double e = std::exp(-2.0 * std::abs(s));
  return 4.0 * e / ((1.0 + e) * (1.0 + e));
}

}  // namespace detail

/// Radial internal layer u = tanh((R - r) / delta), r = |x - c|, on [0,1]^2.
/// f = -(u'' + u'/r) with u' = -sech^2(s)/delta and u'' = -2 sech^2(s) tanh(s)/delta^2.
inline ProblemDefinition case2_tanh(double radius = 0.25, double delta = 0.01, Vec2 center = {0.5, 0.5}) {
  ProblemDefinition p;
  p.name = "case2_tanh";
  p.domain = {0.0, 1.0, 0.0, 1.0};
  p.exact.u = [=](const Vec2& x) { return std::tanh((radius - norm(x - center)) / delta); };
  p.exact.grad = [=](const Vec2& x) {
    const Vec2 d = x - center;
    const double r = std::max(norm(d), 1e-12);
    const double du = -detail::sech2((radius - r) / delta) / delta;
    return (du / r) * d;
  };
  p.f = [=](const Vec2& x) {
    const double r = std::max(norm(x - center), 1e-12);
    const double s = (radius - r) / delta;
    const double sh = detail::sech2(s);
    const double du = -sh / delta;
    const double d2u = -2.0 * sh * std::tanh(s) / (delta * delta);
    return -(d2u + du / r);
  };
  p.bc = p.exact.u;
  return p;
}

/// Error in a user-supplied expression.
class ExpressionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Compiles arithmetic expressions in x and y: + - * / ^, parentheses,
/// constants pi and e, and the functions sin cos tan exp log sqrt abs tanh sinh
/// cosh atan (one argument) and pow min max atan2 (two arguments).
class Expression {
 public:
  explicit Expression(const std::string& text) : src_(text) {
    fn_ = parse_sum();
    skip();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
  }

  double operator()(const Vec2& x) const { return fn_(x.x, x.y); }
  const std::string& text() const noexcept { return src_; }

 private:
  using Fn = std::function<double(double, double)>;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ExpressionError("expression \"" + src_ + "\": " + msg + " at position " + std::to_string(pos_));
  }
  void skip() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Fn parse_sum() {
    Fn lhs = parse_product();
    for (;;) {
      if (accept('+')) {
        Fn rhs = parse_product();
        lhs = [lhs, rhs](double x, double y) { return lhs(x, y) + rhs(x, y); };
      } else if (accept('-')) {
        Fn rhs = parse_product();
        lhs = [lhs, rhs](double x, double y) { return lhs(x, y) - rhs(x, y); };
      } else {
        return lhs;
      }
    }
  }

  Fn parse_product() {
    Fn lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        Fn rhs = parse_unary();
        lhs = [lhs, rhs](double x, double y) { return lhs(x, y) * rhs(x, y); };
      } else if (accept('/')) {
        Fn rhs = parse_unary();
        lhs = [lhs, rhs](double x, double y) { return lhs(x, y) / rhs(x, y); };
      } else {
        return lhs;
      }
    }
  }

  Fn parse_unary() {
    if (accept('-')) {
      Fn a = parse_unary();
      return [a](double x, double y) { return -a(x, y); };
    }
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  // Right-associative; binds tighter than unary minus on its left: -x^2 = -(x^2).
  Fn parse_power() {
    Fn base = parse_primary();
    if (accept('^')) {
      Fn ex = parse_unary();
      return [base, ex](double x, double y) { return std::pow(base(x, y), ex(x, y)); };
    }
    return base;
  }

  Fn parse_primary() {
    skip();
    if (pos_ >= src_.size()) fail("unexpected end");
    if (accept('(')) {
      Fn inner = parse_sum();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(src_.substr(pos_), &used);
      } catch (const std::exception&) {
        fail("bad number");
      }
      pos_ += used;
      return [v](double, double) { return v; };
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
      const std::string id = src_.substr(start, pos_ - start);
      if (id == "x") return [](double x, double) { return x; };
      if (id == "y") return [](double, double y) { return y; };
      if (id == "pi") return [](double, double) { return std::numbers::pi; };
      if (id == "e") return [](double, double) { return std::numbers::e; };
      if (!accept('(')) fail("unknown identifier '" + id + "'");
      std::vector<Fn> args{parse_sum()};
      while (accept(',')) args.push_back(parse_sum());
      if (!accept(')')) fail("expected ')'");
      return make_call(id, std::move(args));
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  Fn make_call(const std::string& id, std::vector<Fn> args) {
    using U = double (*)(double);
    static const std::vector<std::pair<std::string, U>> unary = {
        {"sin", [](double v) { return std::sin(v); }},   {"cos", [](double v) { return std::cos(v); }},
        {"tan", [](double v) { return std::tan(v); }},   {"exp", [](double v) { return std::exp(v); }},
        {"log", [](double v) { return std::log(v); }},   {"sqrt", [](double v) { return std::sqrt(v); }},
        {"abs", [](double v) { return std::abs(v); }},   {"tanh", [](double v) { return std::tanh(v); }},
        {"sinh", [](double v) { return std::sinh(v); }}, {"cosh", [](double v) { return std::cosh(v); }},
        {"atan", [](double v) { return std::atan(v); }},
    };
    for (const auto& [name, f] : unary) {
      if (name != id) continue;
      if (args.size() != 1) fail(id + " takes one argument");
      Fn a = args[0];
      return [f, a](double x, double y) { return f(a(x, y)); };
    }
    using B = double (*)(double, double);
    static const std::vector<std::pair<std::string, B>> binary = {
        {"pow", [](double a, double b) { return std::pow(a, b); }},
        {"min", [](double a, double b) { return std::min(a, b); }},
        {"max", [](double a, double b) { return std::max(a, b); }},
        {"atan2", [](double a, double b) { return std::atan2(a, b); }},
    };
    for (const auto& [name, f] : binary) {
      if (name != id) continue;
      if (args.size() != 2) fail(id + " takes two arguments");
      Fn a = args[0], b = args[1];
      return [f, a, b](double x, double y) { return f(a(x, y), b(x, y)); };
    }
    fail("unknown function '" + id + "'");
  }

  std::string src_;
  std::size_t pos_ = 0;
  Fn fn_;
};

/// User-supplied exact solution u and source f on a rectangle; the gradient
/// is taken from optional expressions or else from central differences of u.
inline ProblemDefinition manufactured(const std::string& u_text, const std::string& f_text, const Rect& domain,
                                      const std::string& grad_x_text = {}, const std::string& grad_y_text = {}) {
  auto u = std::make_shared<Expression>(u_text);
  auto f = std::make_shared<Expression>(f_text);
  ProblemDefinition p;
  p.name = "manufactured";
  p.domain = domain;
  p.exact.u = [u](const Vec2& x) { return (*u)(x); };
  p.f = [f](const Vec2& x) { return (*f)(x); };
  p.bc = p.exact.u;
  if (!grad_x_text.empty() && !grad_y_text.empty()) {
    auto gx = std::make_shared<Expression>(grad_x_text);
    auto gy = std::make_shared<Expression>(grad_y_text);
    p.exact.grad = [gx, gy](const Vec2& x) { return Vec2{(*gx)(x), (*gy)(x)}; };
  } else {
    const double h = 1e-6 * std::max(domain.width(), domain.height());
    p.exact.grad = [u, h](const Vec2& x) {
      return Vec2{((*u)({x.x + h, x.y}) - (*u)({x.x - h, x.y})) / (2 * h),
                  ((*u)({x.x, x.y + h}) - (*u)({x.x, x.y - h})) / (2 * h)};
    };
  }
  return p;
}

}  // namespace mmigm
