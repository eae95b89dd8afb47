#pragma once

// Oblique reflection map (z, y) = (Phi(x), Psi(x)) with V = I - P^T, and its
// directional derivative.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <vector>

#include "tnet/error.hpp"
#include "tnet/paths.hpp"

namespace tnet {

struct ReflectionOptions {
  double tol = 1e-10;           ///< sup-norm change, scaled by (1 + sup|x|)
  std::size_t max_iter = 10000;
  bool check_start = true;      ///< require x(t0) >= 0
};

struct ReflectionSolution {
  VectorPath z;
  VectorPath y;
  std::size_t iterations = 0;
  double residual = 0.0;
};

/// Zero-detection tolerance 1e-9 (1 + sup|x|).
inline double zero_tolerance(const VectorPath& x) { return 1e-9 * (1.0 + sup_norm(x)); }

namespace detail {

inline void check_routing(const VectorPath& x, const Eigen::MatrixXd& P, const char* who) {
  if (P.rows() != P.cols() || static_cast<std::size_t>(P.rows()) != x.dim())
    throw ArgumentError(std::string(who) + ": routing matrix does not match path dimension");
}

}  // namespace detail

/// Fixed point y(t) = sup_{s<=t}[-x(s) + P^T y(s)]^+, z = x + (I - P^T) y.
/// Because the map is causal, the grid fixed point is solved one time point
/// at a time: y(t_i) = max(y(t_{i-1}), [-x(t_i) + P^T y(t_i)]^+).
inline ReflectionSolution solve_oblique_reflection(const VectorPath& x, const Eigen::MatrixXd& P,
                                                   const ReflectionOptions& opt = {}) {
  detail::check_routing(x, P, "solve_oblique_reflection");
  const std::size_t K = x.dim(), m = x.size();
  const double scale = 1.0 + sup_norm(x);
  if (opt.check_start)
    for (std::size_t k = 0; k < K; ++k)
      if (x(k, 0) < -1e-9 * scale)
        throw PreconditionError("solve_oblique_reflection: x(t0) must be non-negative");
  const double tol = opt.tol * scale;
  const Eigen::MatrixXd G = P.transpose();
  ReflectionSolution sol{VectorPath(x.grid(), K, x.interpolation()), VectorPath(x.grid(), K, x.interpolation()),
                         0, 0.0};
  std::vector<double> prev(K, 0.0), cur(K), nxt(K);
  for (std::size_t i = 0; i < m; ++i) {
    cur = prev;
    std::size_t it = 0;
    double change = 0.0;
    do {
      change = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        double v = -x(k, i);
        for (std::size_t l = 0; l < K; ++l) v += G(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) * cur[l];
        nxt[k] = std::max(prev[k], std::max(v, 0.0));
        change = std::max(change, std::abs(nxt[k] - cur[k]));
      }
      std::swap(cur, nxt);
      ++it;
    } while (change >= tol && it < opt.max_iter);
    if (change >= tol)
      throw SolverError("solve_oblique_reflection: no convergence at t = " + std::to_string(x.grid().time(i)),
                        change);
    sol.iterations = std::max(sol.iterations, it);
    sol.residual = std::max(sol.residual, change);
    for (std::size_t k = 0; k < K; ++k) sol.y(k, i) = cur[k];
    prev = cur;
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < K; ++k) {
      double v = x(k, i) + sol.y(k, i);
      for (std::size_t l = 0; l < K; ++l) v -= G(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) * sol.y(l, i);
      sol.z(k, i) = v;
    }
  return sol;
}

/// Nested running-sup formulas for the two-node tandem (node 1 feeds node 2).
inline ReflectionSolution tandem_closed_form(const VectorPath& x) {
  if (x.dim() != 2) throw ArgumentError("tandem_closed_form: path must have dimension 2");
  ReflectionSolution sol{VectorPath(x.grid(), 2, x.interpolation()), VectorPath(x.grid(), 2, x.interpolation()), 1,
                         0.0};
  double y1 = 0.0, y2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y1 = std::max(y1, -x(0, i));
    y2 = std::max(y2, -x(1, i) + y1);
    sol.y(0, i) = y1;
    sol.y(1, i) = y2;
    sol.z(0, i) = x(0, i) + y1;
    sol.z(1, i) = x(1, i) + y2 - y1;
  }
  return sol;
}

inline ReflectionSolution tandem_closed_form(const VectorPath& x, const Eigen::MatrixXd& P) {
  Eigen::MatrixXd T(2, 2);
  T << 0, 1, 0, 0;
  if (P.rows() != 2 || P.cols() != 2 || (P - T).cwiseAbs().maxCoeff() != 0.0)
    throw ArgumentError("tandem_closed_form: P must be the tandem matrix [[0,1],[0,0]]");
  return tandem_closed_form(x);
}

/// sqrt(n) (Phi(x + chi / sqrt(n)) - Phi(x)).
inline VectorPath directional_derivative_fd(const VectorPath& x, const VectorPath& chi, const Eigen::MatrixXd& P,
                                            double n_fd = 1e8) {
  require_same_grid(x, chi, "directional_derivative_fd");
  double rn = std::sqrt(n_fd);
  VectorPath xp = x;
  for (std::size_t k = 0; k < x.dim(); ++k)
    for (std::size_t i = 0; i < x.size(); ++i) xp(k, i) += chi(k, i) / rn;
  ReflectionOptions base;
  ReflectionOptions pert;
  pert.check_start = false;
  auto a = solve_oblique_reflection(x, P, base);
  auto b = solve_oblique_reflection(xp, P, pert);
  VectorPath out(x.grid(), x.dim(), x.interpolation());
  for (std::size_t k = 0; k < x.dim(); ++k)
    for (std::size_t i = 0; i < x.size(); ++i) out(k, i) = rn * (b.z(k, i) - a.z(k, i));
  return out;
}

struct DirectionalDerivativeSolution {
  VectorPath value;  ///< Delta = chi + (I - P^T) gamma
  VectorPath gamma;
  std::vector<double> t_u;                     ///< per node; +inf if the regulator never grows
  std::vector<std::size_t> t_u_index;          ///< last grid index on the [.]^+ branch
  std::vector<std::vector<char>> zero;         ///< zero[i][s]: |z_i(s)| <= tol_c
  std::vector<std::vector<std::size_t>> window_start;  ///< first s with y_i(s) >= y_i(t) - tol_c
  std::size_t empty_nabla = 0;                 ///< (i, t) pairs with empty nabla set
  std::size_t iterations = 0;

  /// Grid indices of nabla_t^i.
  std::vector<std::size_t> nabla(std::size_t i, std::size_t t) const {
    std::vector<std::size_t> out;
    for (std::size_t s = window_start[i][t]; s <= t; ++s)
      if (zero[i][s]) out.push_back(s);
    return out;
  }
};

/// Precomputes (z, y) = (Phi(x), Psi(x)) and the nabla-set structure so the
/// directional derivative can be evaluated for many directions chi.
class DirectionalRegulator {
 public:
  DirectionalRegulator(const VectorPath& x, const Eigen::MatrixXd& P, const ReflectionOptions& opt = {})
      : x_(x), P_(P), opt_(opt), refl_(solve_oblique_reflection(x, P, opt)), tol_c_(zero_tolerance(x)) {
    const std::size_t K = x.dim(), m = x.size();
    zero_.assign(K, std::vector<char>(m, 0));
    window_.assign(K, std::vector<std::size_t>(m, 0));
    t_u_.assign(K, std::numeric_limits<double>::infinity());
    t_u_index_.assign(K, m - 1);
    for (std::size_t i = 0; i < K; ++i) {
      std::size_t a = 0;
      bool found = false;
      for (std::size_t t = 0; t < m; ++t) {
        zero_[i][t] = std::abs(refl_.z(i, t)) <= tol_c_;
        while (refl_.y(i, a) < refl_.y(i, t) - tol_c_) ++a;
        window_[i][t] = a;
        if (!found && refl_.y(i, t) > tol_c_) {
          found = true;
          t_u_index_[i] = t == 0 ? 0 : t - 1;
          t_u_[i] = x.grid().time(t_u_index_[i]);
        }
      }
      if (!found) plus_all_.push_back(i);
    }
    plus_all_mask_.assign(K, 0);
    for (auto i : plus_all_) plus_all_mask_[i] = 1;
  }

  const ReflectionSolution& reflection() const noexcept { return refl_; }
  double tol_c() const noexcept { return tol_c_; }
  const VectorPath& netput() const noexcept { return x_; }

  /// True if grid index t of node i uses the [.]^+ branch.
  bool plus_branch(std::size_t i, std::size_t t) const { return plus_all_mask_[i] || t <= t_u_index_[i]; }

  DirectionalDerivativeSolution apply(const VectorPath& chi) const {
    require_same_grid(x_, chi, "directional_regulator");
    const std::size_t K = x_.dim(), m = x_.size();
    const double tol = opt_.tol * (1.0 + sup_norm(chi));
    const Eigen::MatrixXd G = P_.transpose();
    DirectionalDerivativeSolution out{VectorPath(x_.grid(), K, chi.interpolation()),
                                      VectorPath(x_.grid(), K, chi.interpolation()),
                                      t_u_,
                                      t_u_index_,
                                      zero_,
                                      window_,
                                      0,
                                      0};
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    // Monotone deques of (index, value) holding maxima of the integrand over zero points.
    std::vector<std::deque<std::pair<std::size_t, double>>> dq(K);
    std::vector<double> cur(K, 0.0), nxt(K), prior(K), g(K);
    for (std::size_t t = 0; t < m; ++t) {
      for (std::size_t i = 0; i < K; ++i) {
        auto& d = dq[i];
        while (!d.empty() && d.front().first < window_[i][t]) d.pop_front();
        prior[i] = d.empty() ? kNegInf : d.front().second;
      }
      std::size_t it = 0;
      double change = 0.0;
      do {
        change = 0.0;
        for (std::size_t i = 0; i < K; ++i) {
          double gi = -chi(i, t);
          for (std::size_t l = 0; l < K; ++l)
            gi += G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) * cur[l];
          g[i] = gi;
          double s = zero_[i][t] ? std::max(prior[i], gi) : prior[i];
          double v;
          if (plus_branch(i, t)) v = s == kNegInf ? 0.0 : std::max(s, 0.0);
          else v = s == kNegInf ? 0.0 : s;
          nxt[i] = v;
          change = std::max(change, std::abs(nxt[i] - cur[i]));
        }
        std::swap(cur, nxt);
        ++it;
      } while (change >= tol && it < opt_.max_iter);
      if (change >= tol)
        throw SolverError("directional_regulator: no convergence at t = " + std::to_string(x_.grid().time(t)),
                          change);
      out.iterations = std::max(out.iterations, it);
      for (std::size_t i = 0; i < K; ++i) {
        double gi = -chi(i, t);
        for (std::size_t l = 0; l < K; ++l) gi += G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) * cur[l];
        if (prior[i] == kNegInf && !zero_[i][t]) ++out.empty_nabla;
        if (zero_[i][t]) {
          auto& d = dq[i];
          while (!d.empty() && d.back().second <= gi) d.pop_back();
          d.emplace_back(t, gi);
        }
        out.gamma(i, t) = cur[i];
      }
    }
    for (std::size_t t = 0; t < m; ++t)
      for (std::size_t i = 0; i < K; ++i) {
        double v = chi(i, t) + out.gamma(i, t);
        for (std::size_t l = 0; l < K; ++l)
          v -= G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) * out.gamma(l, t);
        out.value(i, t) = v;
      }
    return out;
  }

  /// Grid indices where the nabla structure changes for some node: the zero
  /// set toggles or the regulator switches between flat and increasing.
  std::vector<std::size_t> regime_changes() const {
    std::vector<std::size_t> out;
    const std::size_t K = x_.dim(), m = x_.size();
    for (std::size_t t = 1; t < m; ++t) {
      bool change = false;
      for (std::size_t i = 0; i < K && !change; ++i) {
        if (zero_[i][t] != zero_[i][t - 1]) change = true;
        bool inc_now = refl_.y(i, t) - refl_.y(i, t - 1) > tol_c_;
        bool inc_before = t >= 2 && refl_.y(i, t - 1) - refl_.y(i, t - 2) > tol_c_;
        if (t >= 2 && inc_now != inc_before) change = true;
        if (t == t_u_index_[i] + 1 && !plus_all_mask_[i]) change = true;
      }
      if (change) out.push_back(t);
    }
    return out;
  }

 private:
  VectorPath x_;
  Eigen::MatrixXd P_;
  ReflectionOptions opt_;
  ReflectionSolution refl_;
  double tol_c_;
  std::vector<std::vector<char>> zero_;
  std::vector<std::vector<std::size_t>> window_;
  std::vector<double> t_u_;
  std::vector<std::size_t> t_u_index_;
  std::vector<std::size_t> plus_all_;
  std::vector<char> plus_all_mask_;
};

inline DirectionalDerivativeSolution directional_regulator(const VectorPath& x, const VectorPath& chi,
                                                           const Eigen::MatrixXd& P) {
  return DirectionalRegulator(x, P).apply(chi);
}

}  // namespace tnet
