#pragma once

// Uniform time grids and gridded vector-valued sample paths.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tnet/error.hpp"

namespace tnet {

class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double t0, double t1, double h) : t0_(t0), t1_(t1), h_(h) {
    if (!(h > 0.0) || !std::isfinite(h)) throw ArgumentError("TimeGrid: step h must be positive");
    if (!(t1 > t0)) throw ArgumentError("TimeGrid: t1 must exceed t0");
    // The 1e-9 slack keeps e.g. (3 - 0) / 0.001 from flooring to 2999.
    m_ = static_cast<std::size_t>(std::floor((t1 - t0) / h + 1e-9)) + 1;
  }

  /// Grid with the default step (t1 - t0) / 1000.
  static TimeGrid with_default_step(double t0, double t1) { return {t0, t1, 1e-3 * (t1 - t0)}; }

  double t0() const noexcept { return t0_; }
  double t1() const noexcept { return t1_; }
  double h() const noexcept { return h_; }
  std::size_t size() const noexcept { return m_; }
  double time(std::size_t i) const noexcept { return t0_ + static_cast<double>(i) * h_; }
  double last_time() const noexcept { return time(m_ - 1); }

  bool contains(double t) const noexcept { return t >= t0_ && t <= t1_; }

  /// Largest i with time(i) <= t (t clamped into the grid).
  std::size_t floor_index(double t) const noexcept {
    if (t <= t0_) return 0;
    double r = (t - t0_) / h_;
    auto i = static_cast<std::size_t>(std::floor(r + 1e-9));
    return std::min(i, m_ - 1);
  }

  /// Index of the grid point nearest to t.
  std::size_t nearest_index(double t) const noexcept {
    if (t <= t0_) return 0;
    auto i = static_cast<std::size_t>(std::llround((t - t0_) / h_));
    return std::min(i, m_ - 1);
  }

  /// Index of t if t is a grid point (to within 1e-9 h), else throws.
  std::size_t index_of(double t) const {
    std::size_t i = nearest_index(t);
    if (std::abs(time(i) - t) > 1e-9 * h_ + 1e-12 * std::abs(t))
      throw ArgumentError("TimeGrid: time " + std::to_string(t) + " is not a grid point");
    return i;
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.t0_ == b.t0_ && a.t1_ == b.t1_ && a.h_ == b.h_;
  }

 private:
  double t0_ = 0.0;
  double t1_ = 1.0;
  double h_ = 1e-3;
  std::size_t m_ = 1001;
};

enum class Interpolation {
  Step,    ///< right-continuous piecewise constant (counting processes)
  Linear,  ///< piecewise linear (deterministic limits)
};

/// dim coordinates sampled on a TimeGrid. Values are stored coordinate-major.
class VectorPath {
 public:
  VectorPath() = default;
  VectorPath(TimeGrid grid, std::size_t dim, Interpolation interp = Interpolation::Linear)
      : grid_(grid), dim_(dim), interp_(interp), values_(dim * grid.size(), 0.0) {
    if (dim == 0) throw ArgumentError("VectorPath: dimension must be positive");
  }

  /// Path whose coordinate k at time t is f(k, t).
  static VectorPath from_function(TimeGrid grid, std::size_t dim, Interpolation interp,
                                  const std::function<double(std::size_t, double)>& f) {
    VectorPath p(grid, dim, interp);
    for (std::size_t k = 0; k < dim; ++k)
      for (std::size_t i = 0; i < grid.size(); ++i) p(k, i) = f(k, grid.time(i));
    return p;
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return grid_.size(); }
  Interpolation interpolation() const noexcept { return interp_; }
  void set_interpolation(Interpolation interp) noexcept { interp_ = interp; }

  double& operator()(std::size_t k, std::size_t i) { return values_[k * grid_.size() + i]; }
  double operator()(std::size_t k, std::size_t i) const { return values_[k * grid_.size() + i]; }

  std::span<double> coord(std::size_t k) { return {values_.data() + k * grid_.size(), grid_.size()}; }
  std::span<const double> coord(std::size_t k) const {
    return {values_.data() + k * grid_.size(), grid_.size()};
  }

  std::vector<double> at_index(std::size_t i) const {
    std::vector<double> v(dim_);
    for (std::size_t k = 0; k < dim_; ++k) v[k] = (*this)(k, i);
    return v;
  }

  /// Coordinate k at time t following the interpolation rule.
  double eval(std::size_t k, double t) const {
    if (!grid_.contains(t))
      throw OutOfRangeError("VectorPath: time " + std::to_string(t) + " outside [" +
                            std::to_string(grid_.t0()) + ", " + std::to_string(grid_.t1()) + "]");
    std::size_t i = grid_.floor_index(t);
    double ti = grid_.time(i);
    if (interp_ == Interpolation::Step || i + 1 >= grid_.size() || t == ti) return (*this)(k, i);
    double w = (t - ti) / grid_.h();
    return (1.0 - w) * (*this)(k, i) + w * (*this)(k, i + 1);
  }

  std::vector<double> eval(double t) const {
    std::vector<double> v(dim_);
    for (std::size_t k = 0; k < dim_; ++k) v[k] = eval(k, t);
    return v;
  }

  /// Restriction to the first `count` grid points.
  VectorPath truncated(std::size_t count) const {
    count = std::min(count, size());
    double t_end = grid_.time(count - 1);
    TimeGrid g = count > 1 ? TimeGrid(grid_.t0(), t_end, grid_.h()) : grid_;
    VectorPath out(g, dim_, interp_);
    for (std::size_t k = 0; k < dim_; ++k)
      std::copy_n(coord(k).begin(), out.size(), out.coord(k).begin());
    return out;
  }

  const std::vector<double>& raw() const noexcept { return values_; }

 private:
  TimeGrid grid_;
  std::size_t dim_ = 0;
  Interpolation interp_ = Interpolation::Linear;
  std::vector<double> values_;
};

inline double path_eval(const VectorPath& p, std::size_t k, double t) { return p.eval(k, t); }
inline std::vector<double> path_eval(const VectorPath& p, double t) { return p.eval(t); }

/// t -> sup_{s <= t} [p(s)]^+ coordinatewise, over grid points.
inline VectorPath path_running_sup_plus(const VectorPath& p) {
  VectorPath out(p.grid(), p.dim(), p.interpolation());
  for (std::size_t k = 0; k < p.dim(); ++k) {
    double run = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      run = std::max(run, p(k, i));
      out(k, i) = run;
    }
  }
  return out;
}

namespace detail {

// Integral of coordinate k of f over [t0, t].
inline double cumulative_integral(const VectorPath& f, std::size_t k, double t) {
  const TimeGrid& g = f.grid();
  std::size_t i = g.floor_index(t);
  double acc = 0.0;
  bool step = f.interpolation() == Interpolation::Step;
  for (std::size_t j = 0; j < i; ++j)
    acc += step ? f(k, j) * g.h() : 0.5 * (f(k, j) + f(k, j + 1)) * g.h();
  double dt = t - g.time(i);
  if (dt > 0.0) acc += step ? f(k, i) * dt : 0.5 * (f(k, i) + f.eval(k, t)) * dt;
  return acc;
}

}  // namespace detail

/// Exact integral of a gridded rate over [a, b] (trapezoid on linear pieces).
inline double path_integral(const VectorPath& f, std::size_t k, double a, double b) {
  if (a > b) throw ArgumentError("path_integral: a > b");
  if (!f.grid().contains(a) || !f.grid().contains(b))
    throw OutOfRangeError("path_integral: bounds outside the grid");
  return detail::cumulative_integral(f, k, b) - detail::cumulative_integral(f, k, a);
}

inline double path_integral(const VectorPath& f, double a, double b) { return path_integral(f, 0, a, b); }

inline void require_same_grid(const VectorPath& a, const VectorPath& b, const char* who) {
  if (!(a.grid() == b.grid()) || a.dim() != b.dim())
    throw ArgumentError(std::string(who) + ": grid or dimension mismatch");
}

/// sup over grid points and coordinates of |a - b|.
inline double sup_distance(const VectorPath& a, const VectorPath& b) {
  require_same_grid(a, b, "sup_distance");
  double d = 0.0;
  for (std::size_t j = 0; j < a.raw().size(); ++j) d = std::max(d, std::abs(a.raw()[j] - b.raw()[j]));
  return d;
}

inline double sup_distance(const VectorPath& a, const VectorPath& b, std::size_t k) {
  require_same_grid(a, b, "sup_distance");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a(k, i) - b(k, i)));
  return d;
}

inline double sup_norm(const VectorPath& a) {
  double d = 0.0;
  for (double v : a.raw()) d = std::max(d, std::abs(v));
  return d;
}

/// CSV with header `t,<names>` and one row per grid point, 12 significant digits.
inline void write_path_csv(std::ostream& os, const VectorPath& p, const std::vector<std::string>& names = {}) {
  os << 't';
  for (std::size_t k = 0; k < p.dim(); ++k)
    os << ',' << (k < names.size() ? names[k] : "v_" + std::to_string(k + 1));
  os << '\n';
  char buf[64];
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.12g", p.grid().time(i));
    os << buf;
    for (std::size_t k = 0; k < p.dim(); ++k) {
      std::snprintf(buf, sizeof buf, "%.12g", p(k, i));
      os << ',' << buf;
    }
    os << '\n';
  }
}

}  // namespace tnet
