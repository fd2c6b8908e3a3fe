#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace mmigm {

/// Gauss-Legendre rule on [0,1]; weights sum to 1.
struct QuadratureRule {
  std::vector<double> points;
  std::vector<double> weights;
  std::size_t size() const noexcept { return points.size(); }
};

/// q-point Gauss-Legendre rule mapped to [0,1], exact for polynomials of degree <= 2q-1.
inline QuadratureRule gauss_rule(int q) {
  if (q < 1 || q > 16) throw std::invalid_argument("gauss_rule: point count must lie in [1, 16]");
  QuadratureRule rule;
  rule.points.resize(static_cast<std::size_t>(q));
  rule.weights.resize(static_cast<std::size_t>(q));
  // Newton iteration on P_q(x) from the Tricomi-style initial guess; roots are symmetric.
  for (int i = 0; i < (q + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (q + 0.5));
    double dp = 1.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= q; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = q * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) {
        // One more evaluation at the converged root for the derivative.
        p0 = 1.0;
        p1 = x;
        for (int k = 2; k <= q; ++k) {
          const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = pk;
        }
        dp = q * (x * p1 - p0) / (x * x - 1.0);
        break;
      }
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(q - 1 - i);
    rule.points[lo] = 0.5 * (1.0 - x);
    rule.points[hi] = 0.5 * (1.0 + x);
    rule.weights[lo] = 0.5 * w;
    rule.weights[hi] = 0.5 * w;
  }
  if (q % 2 == 1) rule.points[static_cast<std::size_t>(q / 2)] = 0.5;
  return rule;
}

}  // namespace mmigm
