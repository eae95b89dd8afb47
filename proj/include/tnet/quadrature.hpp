#pragma once

// Gauss-Legendre rules and normal-distribution helpers.

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <utility>
#include <vector>

namespace tnet {

struct GaussLegendre {
  std::vector<double> x;  ///< nodes on [-1, 1]
  std::vector<double> w;

  /// Integral of f over [a, b].
  template <class F>
  double integrate(F&& f, double a, double b) const {
    double c = 0.5 * (b - a), d = 0.5 * (b + a), s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * f(c * x[i] + d);
    return c * s;
  }
};

/// n-point rule, Newton iteration on Legendre polynomials; cached per n.
inline const GaussLegendre& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, GaussLegendre> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  GaussLegendre g;
  g.x.resize(static_cast<std::size_t>(n));
  g.w.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it2 = 0; it2 < 100; ++it2) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      dp = n * (z * p1 - p2) / (z * z - 1.0);
      double z1 = z;
      z = z1 - p1 / dp;
      if (std::abs(z - z1) < 1e-15) break;
    }
    auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(n - 1 - i);
    g.x[a] = -z;
    g.x[b] = z;
    g.w[a] = g.w[b] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return cache.emplace(n, std::move(g)).first->second;
}

inline double normal_cdf(double x) { return 0.5 * boost::math::erfc(-x / std::numbers::sqrt2); }

inline double normal_quantile(double p) {
  if (p <= 0.0) return -INFINITY;
  if (p >= 1.0) return INFINITY;
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

/// P(X <= h, Y <= k) for standard normals with correlation rho.
/// Uses the derivative in rho, integrated over theta = asin(r) with 64-point
/// Gauss-Legendre so the integrand stays smooth near |rho| = 1.
inline double bivariate_normal_cdf(double h, double k, double rho) {
  if (std::isinf(h) || std::isinf(k)) {
    if (h == -INFINITY || k == -INFINITY) return 0.0;
    if (h == INFINITY) return normal_cdf(k);
    return normal_cdf(h);
  }
  if (rho >= 1.0) return normal_cdf(std::min(h, k));
  if (rho <= -1.0) return std::max(0.0, normal_cdf(h) - normal_cdf(-k));
  double base = normal_cdf(h) * normal_cdf(k);
  if (rho == 0.0) return base;
  const auto& gl = gauss_legendre(64);
  double th = std::asin(rho);
  double I = gl.integrate(
      [&](double t) {
        double s = std::sin(t), c2 = std::cos(t) * std::cos(t);
        return std::exp(-(h * h - 2.0 * s * h * k + k * k) / (2.0 * c2));
      },
      0.0, th);
  return std::clamp(base + I / (2.0 * std::numbers::pi), 0.0, 1.0);
}

}  // namespace tnet
