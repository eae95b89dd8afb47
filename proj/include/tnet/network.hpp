#pragma once

// Network description: routing, arrival laws, service profiles, validation.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tnet/error.hpp"
#include "tnet/paths.hpp"

namespace tnet {

class ArrivalLaw {
 public:
  enum class Kind { Uniform, TriangularSymmetric, PiecewiseLinearCDF, Point };

  static ArrivalLaw uniform(double a, double b) { return ArrivalLaw(Kind::Uniform, a, b, {}); }
  static ArrivalLaw triangular(double a, double b) { return ArrivalLaw(Kind::TriangularSymmetric, a, b, {}); }
  /// Degenerate law: every epoch equals `at`.
  static ArrivalLaw point(double at) { return ArrivalLaw(Kind::Point, at, at, {}); }
  /// CDF interpolating the knots (t_i, F_i); F must run from 0 to 1.
  static ArrivalLaw piecewise_linear(std::vector<std::pair<double, double>> knots) {
    if (knots.size() < 2) throw ArgumentError("piecewise-linear CDF needs at least two knots");
    double a = knots.front().first, b = knots.back().first;
    return ArrivalLaw(Kind::PiecewiseLinearCDF, a, b, std::move(knots));
  }

  Kind kind() const noexcept { return kind_; }
  double support_start() const noexcept { return a_; }
  double support_end() const noexcept { return b_; }
  const std::vector<std::pair<double, double>>& knots() const noexcept { return knots_; }

  /// Problems with the law's own parameters, empty when well-formed.
  std::vector<std::string> check() const {
    std::vector<std::string> out;
    if (!std::isfinite(a_) || !std::isfinite(b_)) out.push_back("support bounds must be finite");
    if (kind_ != Kind::Point && !(b_ > a_)) out.push_back("support must satisfy a < b");
    if (kind_ == Kind::PiecewiseLinearCDF) {
      if (knots_.front().second != 0.0) out.push_back("first knot must have F = 0");
      if (knots_.back().second != 1.0) out.push_back("last knot must have F = 1");
      for (std::size_t i = 1; i < knots_.size(); ++i)
        if (!(knots_[i].first > knots_[i - 1].first) || !(knots_[i].second > knots_[i - 1].second)) {
          out.push_back("knots must be strictly increasing in t and F (knot " + std::to_string(i) + ")");
          break;
        }
    }
    return out;
  }

  double cdf(double t) const {
    switch (kind_) {
      case Kind::Point:
        return t >= a_ ? 1.0 : 0.0;
      case Kind::Uniform:
        if (t <= a_) return 0.0;
        if (t >= b_) return 1.0;
        return (t - a_) / (b_ - a_);
      case Kind::TriangularSymmetric: {
        if (t <= a_) return 0.0;
        if (t >= b_) return 1.0;
        double w = b_ - a_, c = 0.5 * (a_ + b_);
        if (t <= c) return 2.0 * (t - a_) * (t - a_) / (w * w);
        return 1.0 - 2.0 * (b_ - t) * (b_ - t) / (w * w);
      }
      case Kind::PiecewiseLinearCDF: {
        if (t <= a_) return 0.0;
        if (t >= b_) return 1.0;
        auto it = std::upper_bound(knots_.begin(), knots_.end(), t,
                                   [](double v, const auto& kn) { return v < kn.first; });
        const auto& hi = *it;
        const auto& lo = *(it - 1);
        return lo.second + (hi.second - lo.second) * (t - lo.first) / (hi.first - lo.first);
      }
    }
    return 0.0;
  }

  /// Right-continuous density; zero for the point law.
  double density(double t) const {
    switch (kind_) {
      case Kind::Point:
        return 0.0;
      case Kind::Uniform:
        return (t >= a_ && t < b_) ? 1.0 / (b_ - a_) : 0.0;
      case Kind::TriangularSymmetric: {
        if (t < a_ || t >= b_) return 0.0;
        double w = b_ - a_, c = 0.5 * (a_ + b_);
        return t < c ? 4.0 * (t - a_) / (w * w) : 4.0 * (b_ - t) / (w * w);
      }
      case Kind::PiecewiseLinearCDF: {
        if (t < a_ || t >= b_) return 0.0;
        auto it = std::upper_bound(knots_.begin(), knots_.end(), t,
                                   [](double v, const auto& kn) { return v < kn.first; });
        const auto& hi = *it;
        const auto& lo = *(it - 1);
        return (hi.second - lo.second) / (hi.first - lo.first);
      }
    }
    return 0.0;
  }

  /// Generalized inverse inf{t : F(t) >= u}.
  double quantile(double u) const {
    u = std::clamp(u, 0.0, 1.0);
    switch (kind_) {
      case Kind::Point:
        return a_;
      case Kind::Uniform:
        return a_ + u * (b_ - a_);
      case Kind::TriangularSymmetric: {
        double w = b_ - a_;
        if (u <= 0.5) return a_ + w * std::sqrt(0.5 * u);
        return b_ - w * std::sqrt(0.5 * (1.0 - u));
      }
      case Kind::PiecewiseLinearCDF: {
        if (u <= 0.0) return a_;
        auto it = std::lower_bound(knots_.begin(), knots_.end(), u,
                                   [](const auto& kn, double v) { return kn.second < v; });
        if (it == knots_.begin()) return a_;
        if (it == knots_.end()) return b_;
        const auto& hi = *it;
        const auto& lo = *(it - 1);
        return lo.first + (hi.first - lo.first) * (u - lo.second) / (hi.second - lo.second);
      }
    }
    return a_;
  }

 private:
  ArrivalLaw(Kind k, double a, double b, std::vector<std::pair<double, double>> knots)
      : kind_(k), a_(a), b_(b), knots_(std::move(knots)) {}

  Kind kind_ = Kind::Uniform;
  double a_ = 0.0;
  double b_ = 1.0;
  std::vector<std::pair<double, double>> knots_;
};

inline double cdf_eval(const ArrivalLaw& law, double t) { return law.cdf(t); }

struct CorrelationModel {
  enum class Kind { Independent, Comonotone, GaussianCopula };
  Kind kind = Kind::Independent;
  Eigen::MatrixXd rho;  ///< J x J, copula case only

  static CorrelationModel independent() { return {}; }
  static CorrelationModel comonotone() { return {Kind::Comonotone, {}}; }
  static CorrelationModel gaussian_copula(Eigen::MatrixXd r) { return {Kind::GaussianCopula, std::move(r)}; }
};

enum class RenewalBase { Deterministic, Exponential, Gamma };

/// Piecewise-constant service rate with a unit-rate renewal base.
class ServiceProfile {
 public:
  ServiceProfile() = default;

  static ServiceProfile constant(double rate, RenewalBase base = RenewalBase::Exponential, double scv = 1.0) {
    return piecewise({{0.0, rate}}, base, scv);
  }

  /// pieces: (start time, rate), start times increasing. The first piece is
  /// extended back to the origin set by set_origin().
  static ServiceProfile piecewise(std::vector<std::pair<double, double>> pieces,
                                  RenewalBase base = RenewalBase::Exponential, double scv = 1.0) {
    if (pieces.empty()) throw ArgumentError("service profile needs at least one rate piece");
    ServiceProfile p;
    p.pieces_ = std::move(pieces);
    p.base_ = base;
    p.scv_ = base == RenewalBase::Deterministic ? 0.0 : base == RenewalBase::Exponential ? 1.0 : scv;
    p.origin_ = p.pieces_.front().first;
    p.rebuild();
    return p;
  }

  /// Sets the time origin (M(origin) = 0) and the end of the checked range.
  void set_origin(double t0, double horizon_end = std::numeric_limits<double>::infinity()) {
    origin_ = t0;
    horizon_end_ = horizon_end;
    if (!pieces_.empty()) pieces_.front().first = std::min(pieces_.front().first, t0);
    rebuild();
  }

  double origin() const noexcept { return origin_; }
  double horizon_end() const noexcept { return horizon_end_; }
  RenewalBase base() const noexcept { return base_; }
  /// Squared coefficient of variation of the unit-mean renewal increments.
  double scv() const noexcept { return scv_; }
  const std::vector<std::pair<double, double>>& pieces() const noexcept { return pieces_; }

  bool is_constant() const {
    for (const auto& pc : pieces_)
      if (pc.second != pieces_.front().second) return false;
    return true;
  }

  std::vector<std::string> check() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      if (!(pieces_[i].second >= 0.0) || !std::isfinite(pieces_[i].second))
        out.push_back("rate piece " + std::to_string(i) + " must be finite and non-negative");
      if (i > 0 && !(pieces_[i].first > pieces_[i - 1].first))
        out.push_back("rate piece start times must be strictly increasing");
    }
    if (base_ == RenewalBase::Gamma && !(scv_ > 0.0)) out.push_back("gamma base needs scv > 0");
    return out;
  }

  /// Rate at t (right-continuous).
  double rate(double t) const {
    std::size_t i = piece_index(t);
    return pieces_[i].second;
  }

  /// M(t) = integral of the rate from the origin to t; valid for any t >= origin.
  double cumulative_unchecked(double t) const {
    if (t <= origin_) return 0.0;
    std::size_t i = piece_index(t);
    return cum_[i] + pieces_[i].second * (t - std::max(pieces_[i].first, origin_));
  }

  double cumulative(double t) const {
    if (t < origin_ - 1e-12 || t > horizon_end_ + 1e-12)
      throw OutOfRangeError("rate_cumulative: time " + std::to_string(t) + " outside the horizon");
    return cumulative_unchecked(std::clamp(t, origin_, horizon_end_));
  }

  /// Smallest t >= origin with M(t) >= u; +inf if the rate never delivers u.
  double inverse_cumulative(double u) const {
    if (u <= 0.0) return origin_;
    // cum_[i] is M at the start of piece i (clamped to the origin).
    std::size_t i = static_cast<std::size_t>(
        std::lower_bound(cum_.begin(), cum_.end(), u) - cum_.begin());
    // Piece i-1 is the first piece whose level range reaches u.
    for (std::size_t j = (i == 0 ? 0 : i - 1); j < pieces_.size(); ++j) {
      double start = std::max(pieces_[j].first, origin_);
      double r = pieces_[j].second;
      double end_level = j + 1 < pieces_.size() ? cum_[j + 1] : std::numeric_limits<double>::infinity();
      if (r > 0.0 && u <= end_level) return start + (u - cum_[j]) / r;
    }
    return std::numeric_limits<double>::infinity();
  }

 private:
  std::size_t piece_index(double t) const {
    auto it = std::upper_bound(pieces_.begin(), pieces_.end(), t,
                               [](double v, const auto& pc) { return v < pc.first; });
    if (it == pieces_.begin()) return 0;
    return static_cast<std::size_t>(it - pieces_.begin()) - 1;
  }

  void rebuild() {
    cum_.assign(pieces_.size(), 0.0);
    for (std::size_t i = 1; i < pieces_.size(); ++i) {
      double a = std::max(pieces_[i - 1].first, origin_);
      double b = std::max(pieces_[i].first, origin_);
      cum_[i] = cum_[i - 1] + pieces_[i - 1].second * (b - a);
    }
  }

  std::vector<std::pair<double, double>> pieces_{{0.0, 1.0}};
  std::vector<double> cum_{0.0};
  RenewalBase base_ = RenewalBase::Exponential;
  double scv_ = 1.0;
  double origin_ = 0.0;
  double horizon_end_ = std::numeric_limits<double>::infinity();
};

inline double rate_cumulative(const ServiceProfile& profile, double t) { return profile.cumulative(t); }

struct NetworkSpec {
  std::size_t K = 1;
  Eigen::MatrixXd P;                     ///< p(i, j): probability of routing i -> j
  std::vector<std::size_t> entry_nodes;  ///< 0-based node indices
  std::vector<ArrivalLaw> arrivals;      ///< one per entry node
  CorrelationModel correlation;
  std::vector<ServiceProfile> services;  ///< one per node
  TimeGrid horizon;
  std::string name;

  std::size_t J() const noexcept { return entry_nodes.size(); }

  /// Index j with entry_nodes[j] == k, if k is an entry node.
  std::optional<std::size_t> entry_index(std::size_t k) const {
    for (std::size_t j = 0; j < entry_nodes.size(); ++j)
      if (entry_nodes[j] == k) return j;
    return std::nullopt;
  }

  /// F_k(t); zero for non-entry nodes.
  double arrival_cdf(std::size_t k, double t) const {
    auto j = entry_index(k);
    return j ? arrivals[*j].cdf(t) : 0.0;
  }

  bool constant_rates() const {
    return std::all_of(services.begin(), services.end(), [](const auto& s) { return s.is_constant(); });
  }

  /// Re-anchors every service profile at the horizon start.
  void anchor_services() {
    for (auto& s : services) s.set_origin(horizon.t0(), horizon.t1());
  }

  Eigen::MatrixXd V() const {
    return Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K)) -
           P.transpose();
  }
};

/// Spectral radius via normalized repeated squaring of P (Gelfand's formula).
inline double spectral_radius(const Eigen::MatrixXd& P, int max_steps = 200, double tol = 1e-10) {
  auto norm = [](const Eigen::MatrixXd& A) { return A.cwiseAbs().rowwise().sum().maxCoeff(); };
  if (P.size() == 0) return 0.0;
  double s0 = norm(P);
  if (s0 == 0.0) return 0.0;
  Eigen::MatrixXd B = P / s0;
  double log_scale = std::log(s0);  // log ||P^(2^j)|| tracked as log_scale
  double prev = s0;
  double pow2 = 1.0;
  for (int j = 1; j <= max_steps; ++j) {
    Eigen::MatrixXd B2 = B * B;
    double s = norm(B2);
    if (s == 0.0) return 0.0;
    B = B2 / s;
    log_scale = 2.0 * log_scale + std::log(s);
    pow2 *= 2.0;
    double rho = std::exp(log_scale / pow2);
    // Before the power exceeds the dimension a nilpotent P can look converged.
    if (pow2 > static_cast<double>(P.rows()) && std::abs(rho - prev) < tol) return rho;
    prev = rho;
  }
  return prev;
}

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> issues;
  double spectral_radius = 0.0;

  std::string summary() const {
    std::ostringstream os;
    for (const auto& s : issues) os << "  - " << s << '\n';
    return os.str();
  }
};

inline ValidationReport validate_spec(const NetworkSpec& spec) {
  ValidationReport rep;
  auto fail = [&](std::string msg) {
    rep.ok = false;
    rep.issues.push_back(std::move(msg));
  };
  const auto K = static_cast<Eigen::Index>(spec.K);
  if (spec.K == 0) fail("K must be positive");
  if (spec.P.rows() != K || spec.P.cols() != K) {
    fail("P must be " + std::to_string(spec.K) + "x" + std::to_string(spec.K));
  } else {
    for (Eigen::Index i = 0; i < K; ++i) {
      for (Eigen::Index j = 0; j < K; ++j)
        if (!(spec.P(i, j) >= 0.0) || !std::isfinite(spec.P(i, j)))
          fail("P(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ") must be finite and >= 0");
      if (spec.P.row(i).sum() > 1.0 + 1e-12)
        fail("row " + std::to_string(i + 1) + " of P sums to more than 1");
    }
    rep.spectral_radius = spectral_radius(spec.P);
    if (!(rep.spectral_radius < 1.0 - 1e-8))
      fail("spectral radius of P is " + std::to_string(rep.spectral_radius) + " (must be < 1)");
  }
  if (spec.entry_nodes.empty()) fail("at least one entry node is required");
  for (std::size_t j = 0; j < spec.entry_nodes.size(); ++j) {
    if (spec.entry_nodes[j] >= spec.K) fail("entry node " + std::to_string(spec.entry_nodes[j] + 1) + " out of range");
    for (std::size_t l = 0; l < j; ++l)
      if (spec.entry_nodes[l] == spec.entry_nodes[j])
        fail("entry node " + std::to_string(spec.entry_nodes[j] + 1) + " listed twice");
  }
  if (spec.arrivals.size() != spec.entry_nodes.size()) {
    fail("need one arrival law per entry node");
  } else {
    for (std::size_t j = 0; j < spec.arrivals.size(); ++j) {
      const auto& law = spec.arrivals[j];
      for (const auto& s : law.check()) fail("arrival law " + std::to_string(j + 1) + ": " + s);
      if (law.support_start() < spec.horizon.t0() || law.support_end() > spec.horizon.t1())
        fail("arrival law " + std::to_string(j + 1) + " support not inside the horizon");
    }
  }
  if (spec.correlation.kind == CorrelationModel::Kind::GaussianCopula) {
    const auto& r = spec.correlation.rho;
    auto J = static_cast<Eigen::Index>(spec.J());
    if (r.rows() != J || r.cols() != J) {
      fail("copula rho must be JxJ");
    } else {
      bool sym = true;
      for (Eigen::Index i = 0; i < J; ++i) {
        if (std::abs(r(i, i) - 1.0) > 1e-12) fail("copula rho must have unit diagonal");
        for (Eigen::Index j = 0; j < J; ++j)
          if (std::abs(r(i, j) - r(j, i)) > 1e-12) sym = false;
      }
      if (!sym) fail("copula rho must be symmetric");
      Eigen::LLT<Eigen::MatrixXd> llt(r);
      if (llt.info() != Eigen::Success) fail("copula rho must be positive definite");
    }
  }
  if (spec.services.size() != spec.K) {
    fail("need one service profile per node");
  } else {
    for (std::size_t k = 0; k < spec.K; ++k)
      for (const auto& s : spec.services[k].check()) fail("service " + std::to_string(k + 1) + ": " + s);
  }
  return rep;
}

}  // namespace tnet
