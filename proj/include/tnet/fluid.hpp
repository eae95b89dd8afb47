#pragma once

// Fluid limits: netput, queue, regulator, busy time, workload, crossing times.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tnet/network.hpp"
#include "tnet/paths.hpp"
#include "tnet/reflection.hpp"

namespace tnet {

/// Xbar_k(t) = F_k(t) - M_k(t) + sum_l p_{l,k} M_l(t).
inline VectorPath fluid_netput(const NetworkSpec& spec) {
  const auto& g = spec.horizon;
  VectorPath X(g, spec.K, Interpolation::Linear);
  std::vector<double> M(spec.K);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double t = g.time(i);
    for (std::size_t l = 0; l < spec.K; ++l) M[l] = spec.services[l].cumulative_unchecked(t);
    for (std::size_t k = 0; k < spec.K; ++k) {
      double v = spec.arrival_cdf(k, t) - M[k];
      for (std::size_t l = 0; l < spec.K; ++l)
        v += spec.P(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) * M[l];
      X(k, i) = v;
    }
  }
  return X;
}

enum class BusyTimeForm {
  RateScaled,  ///< t 1 - integral of dPsi_k / mu_k  (= t 1 - M Psi for constant rates)
  Corollary,   ///< t 1 - (I - P^T)^{-1} Psi, the parallel-network corollary's form
};

struct FluidSolution {
  VectorPath X;  ///< netput
  VectorPath Q;  ///< queue, Phi(X)
  VectorPath Y;  ///< regulator, Psi(X)
  VectorPath B;  ///< busy time
  VectorPath Z;  ///< workload M Q (constant rates only)
  bool workload_supported = false;
  BusyTimeForm busy_form = BusyTimeForm::RateScaled;
  std::size_t iterations = 0;
  double tol_c = 0.0;
};

inline FluidSolution fluid_solve(const NetworkSpec& spec, BusyTimeForm form = BusyTimeForm::RateScaled) {
  FluidSolution s;
  s.X = fluid_netput(spec);
  auto r = solve_oblique_reflection(s.X, spec.P);
  s.Q = std::move(r.z);
  s.Y = std::move(r.y);
  s.iterations = r.iterations;
  s.tol_c = zero_tolerance(s.X);
  s.busy_form = form;
  const auto& g = spec.horizon;
  const std::size_t K = spec.K;
  s.B = VectorPath(g, K, Interpolation::Linear);
  if (form == BusyTimeForm::Corollary) {
    Eigen::MatrixXd Vinv = spec.V().inverse();
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t k = 0; k < K; ++k) {
        double v = 0.0;
        for (std::size_t l = 0; l < K; ++l) v += Vinv(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) * s.Y(l, i);
        s.B(k, i) = (g.time(i) - g.t0()) - v;
      }
  } else {
    for (std::size_t k = 0; k < K; ++k) {
      double idle = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (i > 0) {
          double dy = s.Y(k, i) - s.Y(k, i - 1);
          double mu = spec.services[k].rate(0.5 * (g.time(i) + g.time(i - 1)));
          if (dy > 0.0 && mu > 0.0) idle += dy / mu;
        }
        s.B(k, i) = (g.time(i) - g.t0()) - idle;
      }
    }
  }
  s.workload_supported = spec.constant_rates();
  if (s.workload_supported) {
    s.Z = VectorPath(g, K, Interpolation::Linear);
    for (std::size_t k = 0; k < K; ++k) {
      double mu = spec.services[k].rate(g.t0());
      for (std::size_t i = 0; i < g.size(); ++i) s.Z(k, i) = mu > 0.0 ? s.Q(k, i) / mu : 0.0;
    }
  }
  return s;
}

/// Dbar_k(t) = M_k(t) - Psi_k(t): cumulative fluid departures from node k.
inline VectorPath fluid_departures(const NetworkSpec& spec, const FluidSolution& s) {
  const auto& g = spec.horizon;
  VectorPath D(g, spec.K, Interpolation::Linear);
  for (std::size_t k = 0; k < spec.K; ++k)
    for (std::size_t i = 0; i < g.size(); ++i)
      D(k, i) = spec.services[k].cumulative_unchecked(g.time(i)) - s.Y(k, i);
  return D;
}

/// max over t of |sum_j F_j(t) - (fluid in system + fluid that exited)|.
inline double fluid_mass_balance_error(const NetworkSpec& spec, const FluidSolution& s) {
  auto D = fluid_departures(spec, s);
  const auto& g = spec.horizon;
  double err = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double in = 0.0, sys = 0.0, out = 0.0;
    for (const auto& law : spec.arrivals) in += law.cdf(g.time(i));
    for (std::size_t k = 0; k < spec.K; ++k) {
      sys += s.Q(k, i);
      out += (1.0 - spec.P.row(static_cast<Eigen::Index>(k)).sum()) * D(k, i);
    }
    err = std::max(err, std::abs(in - sys - out));
  }
  return err;
}

// ---------------------------------------------------------------- crossings

struct CrossingTimes {
  std::size_t node = 0;
  std::optional<double> tau1, tau2;    ///< F(t) vs mu_k (t - t0): end / restart of overload
  std::optional<double> tau1p, tau2p;  ///< F'(t) >= mu_k: first and last time
  std::vector<double> emptying;        ///< times Qbar_k returns to zero (reflection-determined)
};

namespace detail {

/// Root of f in [a, b] given a sign change, by bisection to 1e-13.
inline double bisect(const std::function<double(double)>& f, double a, double b) {
  double fa = f(a);
  for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
    double c = 0.5 * (a + b), fc = f(c);
    if ((fc > 0.0) == (fa > 0.0)) a = c, fa = fc;
    else b = c;
  }
  return 0.5 * (a + b);
}

}  // namespace detail

/// Crossing times for single-entry networks. Node k compares the entry law F
/// against its own constant rate mu_k.
inline std::vector<CrossingTimes> crossing_times(const NetworkSpec& spec, const FluidSolution* fluid = nullptr) {
  if (spec.J() != 1) throw ArgumentError("crossing_times: needs exactly one entry node");
  const auto& law = spec.arrivals[0];
  const auto& g = spec.horizon;
  const double t0 = g.t0();
  std::vector<CrossingTimes> out;
  for (std::size_t k = 0; k < spec.K; ++k) {
    CrossingTimes c;
    c.node = k;
    double mu = spec.services[k].rate(t0);
    std::function<double(double)> gap = [&](double t) { return law.cdf(t) - mu * (t - t0); };
    // tau1: end of the first positive stretch of F - mu e (t0 if never positive).
    double scale = 1e-12;
    bool pos = false;
    std::optional<double> t1c, t2c;
    for (std::size_t i = 1; i < g.size(); ++i) {
      double a = g.time(i - 1), b = g.time(i);
      bool pb = gap(b) > scale;
      if (i == 1 && !pb) t1c = t0;
      if (pos && !pb && !t1c) t1c = detail::bisect(gap, a, b);
      else if (!pos && pb && t1c && !t2c) t2c = detail::bisect(gap, a, b);
      pos = pb;
    }
    if (!t1c && !pos) t1c = t0;
    c.tau1 = t1c;
    c.tau2 = t2c;
    std::function<double(double)> dgap = [&](double t) { return law.density(t) - mu + 1e-15; };
    for (std::size_t i = 0; i < g.size(); ++i) {
      double t = g.time(i);
      if (dgap(t) >= 0.0) {
        if (!c.tau1p) c.tau1p = i == 0 ? t : detail::bisect(dgap, g.time(i - 1), t);
        double next = i + 1 < g.size() ? g.time(i + 1) : t;
        if (i + 1 < g.size() && dgap(next) < 0.0) c.tau2p = detail::bisect(dgap, t, next);
        else if (i + 1 == g.size()) c.tau2p = t;
      }
    }
    if (fluid) {
      for (std::size_t i = 1; i < g.size(); ++i)
        if (fluid->Q(k, i - 1) > fluid->tol_c && fluid->Q(k, i) <= fluid->tol_c) c.emptying.push_back(g.time(i));
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline nlohmann::json crossing_times_json(const std::vector<CrossingTimes>& cs) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cs)
    arr.push_back({{"node", c.node + 1},
                   {"tau1", opt(c.tau1)},
                   {"tau2", opt(c.tau2)},
                   {"tau1p", opt(c.tau1p)},
                   {"tau2p", opt(c.tau2p)},
                   {"emptying", c.emptying}});
  return arr;
}

}  // namespace tnet
