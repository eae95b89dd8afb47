#pragma once

// Samplers for arrival epochs, Brownian bridges, renewal service and routing.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "tnet/error.hpp"
#include "tnet/network.hpp"
#include "tnet/paths.hpp"
#include "tnet/quadrature.hpp"
#include "tnet/rng.hpp"

namespace tnet {

// ---------------------------------------------------------------- arrivals

/// n epochs per entry node, coupled across nodes per job index, each list sorted.
inline std::vector<std::vector<double>> sample_arrival_epochs(const NetworkSpec& spec, std::size_t n,
                                                              RngStream& rng) {
  if (n < 1) throw ArgumentError("sample_arrival_epochs: n must be >= 1");
  const std::size_t J = spec.J();
  std::vector<std::vector<double>> out(J, std::vector<double>(n));
  switch (spec.correlation.kind) {
    case CorrelationModel::Kind::Independent:
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t m = 0; m < n; ++m) out[j][m] = spec.arrivals[j].quantile(rng.uniform());
      break;
    case CorrelationModel::Kind::Comonotone:
      for (std::size_t m = 0; m < n; ++m) {
        double u = rng.uniform();
        for (std::size_t j = 0; j < J; ++j) out[j][m] = spec.arrivals[j].quantile(u);
      }
      break;
    case CorrelationModel::Kind::GaussianCopula: {
      Eigen::LLT<Eigen::MatrixXd> llt(spec.correlation.rho);
      if (llt.info() != Eigen::Success) throw ArgumentError("copula rho is not positive definite");
      Eigen::MatrixXd L = llt.matrixL();
      Eigen::VectorXd z(static_cast<Eigen::Index>(J));
      for (std::size_t m = 0; m < n; ++m) {
        for (std::size_t j = 0; j < J; ++j) z(static_cast<Eigen::Index>(j)) = rng.normal();
        Eigen::VectorXd x = L * z;
        for (std::size_t j = 0; j < J; ++j)
          out[j][m] = spec.arrivals[j].quantile(normal_cdf(x(static_cast<Eigen::Index>(j))));
      }
      break;
    }
  }
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

/// Counting path A(t) = #{epochs <= t} per list, right-continuous steps.
inline VectorPath counting_path(const std::vector<std::vector<double>>& sorted_epochs, const TimeGrid& grid) {
  VectorPath A(grid, sorted_epochs.size(), Interpolation::Step);
  for (std::size_t j = 0; j < sorted_epochs.size(); ++j) {
    const auto& e = sorted_epochs[j];
    std::size_t c = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double t = grid.time(i);
      while (c < e.size() && e[c] <= t) ++c;
      A(j, i) = static_cast<double>(c);
    }
  }
  return A;
}

// ---------------------------------------------------------------- bridge

/// Covariance of the J-dimensional bridge W0(t) built from the arrival laws.
class BridgeCovariance {
 public:
  BridgeCovariance(std::vector<ArrivalLaw> laws, CorrelationModel corr)
      : laws_(std::move(laws)), corr_(std::move(corr)) {}
  explicit BridgeCovariance(const NetworkSpec& spec) : BridgeCovariance(spec.arrivals, spec.correlation) {}

  std::size_t J() const noexcept { return laws_.size(); }
  const CorrelationModel& correlation() const noexcept { return corr_; }
  double F(std::size_t j, double t) const { return laws_[j].cdf(t); }

  /// P(T_i <= t, T_j <= s) for one job's epochs at entry nodes i and j.
  double joint(std::size_t i, std::size_t j, double t, double s) const {
    double fi = F(i, t), fj = F(j, s);
    if (i == j) return F(i, std::min(t, s));
    switch (corr_.kind) {
      case CorrelationModel::Kind::Independent:
        return fi * fj;
      case CorrelationModel::Kind::Comonotone:
        return std::min(fi, fj);
      case CorrelationModel::Kind::GaussianCopula:
        if (fi <= 0.0 || fj <= 0.0) return 0.0;
        if (fi >= 1.0) return fj;
        if (fj >= 1.0) return fi;
        return bivariate_normal_cdf(normal_quantile(fi), normal_quantile(fj),
                                    corr_.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    return 0.0;
  }

  /// Cov(W0_i(t), W0_j(s)).
  double cov(std::size_t i, std::size_t j, double t, double s) const {
    return joint(i, j, t, s) - F(i, t) * F(j, s);
  }

  Eigen::MatrixXd matrix(double t, double s) const {
    auto n = static_cast<Eigen::Index>(J());
    Eigen::MatrixXd R(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        R(i, j) = cov(static_cast<std::size_t>(i), static_cast<std::size_t>(j), t, s);
    return R;
  }

 private:
  std::vector<ArrivalLaw> laws_;
  CorrelationModel corr_;
};

/// Reusable exact-on-grid bridge sampler. Independent and comonotone laws use
/// the Markov recursion of a standard bridge in F-time; the copula case uses
/// a pivoted LDL^T factor of the full grid covariance.
class BridgeSampler {
 public:
  BridgeSampler(BridgeCovariance cov, TimeGrid grid) : cov_(std::move(cov)), grid_(grid) {
    if (cov_.J() > 1 && cov_.correlation().kind == CorrelationModel::Kind::GaussianCopula) factorize();
  }

  /// Number of conditional variances in [-1e-12, 0] that were clamped to zero.
  std::size_t clamp_count() const noexcept { return clamps_; }

  VectorPath sample(RngStream& rng) const {
    const std::size_t J = cov_.J(), m = grid_.size();
    VectorPath W(grid_, J, Interpolation::Linear);
    if (J == 1 || cov_.correlation().kind == CorrelationModel::Kind::Independent) {
      for (std::size_t j = 0; j < J; ++j) {
        std::vector<double> u(m);
        for (std::size_t i = 0; i < m; ++i) u[i] = cov_.F(j, grid_.time(i));
        auto b = standard_bridge(u, rng);
        for (std::size_t i = 0; i < m; ++i) W(j, i) = b[i];
      }
    } else if (cov_.correlation().kind == CorrelationModel::Kind::Comonotone) {
      std::vector<double> levels;
      levels.reserve(J * m);
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t i = 0; i < m; ++i) levels.push_back(cov_.F(j, grid_.time(i)));
      std::sort(levels.begin(), levels.end());
      levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
      auto b = standard_bridge(levels, rng);
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t i = 0; i < m; ++i) {
          double u = cov_.F(j, grid_.time(i));
          auto pos = std::lower_bound(levels.begin(), levels.end(), u) - levels.begin();
          W(j, i) = b[static_cast<std::size_t>(pos)];
        }
    } else {
      Eigen::VectorXd z(factor_.cols());
      for (Eigen::Index r = 0; r < z.size(); ++r) z(r) = rng.normal();
      Eigen::VectorXd x = factor_ * z;
      for (std::size_t r = 0; r < active_.size(); ++r) {
        std::size_t idx = active_[r];
        W(idx % J, idx / J) = x(static_cast<Eigen::Index>(r));
      }
    }
    return W;
  }

 private:
  // Standard Brownian bridge on [0,1] at non-decreasing levels u; exactly 0 at u <= 0 and u >= 1.
  static std::vector<double> standard_bridge(const std::vector<double>& u, RngStream& rng) {
    std::vector<double> b(u.size(), 0.0);
    double up = 0.0, bp = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      double ui = u[i];
      if (ui <= 0.0 || ui >= 1.0) {
        b[i] = 0.0;
        if (ui >= 1.0) up = 1.0, bp = 0.0;
        continue;
      }
      if (ui <= up) {
        b[i] = bp;
        continue;
      }
      double mean = bp * (1.0 - ui) / (1.0 - up);
      double var = (ui - up) * (1.0 - ui) / (1.0 - up);
      bp = mean + std::sqrt(std::max(var, 0.0)) * rng.normal();
      up = ui;
      b[i] = bp;
    }
    return b;
  }

  void factorize() {
    const std::size_t J = cov_.J(), m = grid_.size();
    // Coordinates with F in {0, 1} are identically zero; leave them out.
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < J; ++j) {
        double f = cov_.F(j, grid_.time(i));
        if (f > 0.0 && f < 1.0) active_.push_back(i * J + j);
      }
    auto n = static_cast<Eigen::Index>(active_.size());
    Eigen::MatrixXd C(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b <= a; ++b) {
        std::size_t ia = active_[static_cast<std::size_t>(a)], ib = active_[static_cast<std::size_t>(b)];
        C(a, b) = C(b, a) = cov_.cov(ia % J, ib % J, grid_.time(ia / J), grid_.time(ib / J));
      }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(C);
    Eigen::VectorXd d = ldlt.vectorD();
    for (Eigen::Index r = 0; r < d.size(); ++r) {
      if (d(r) < -1e-12) throw CovarianceError("bridge covariance has conditional variance " + std::to_string(d(r)));
      if (d(r) <= 0.0) {
        if (d(r) < 0.0) ++clamps_;
        d(r) = 0.0;
      }
    }
    Eigen::MatrixXd L = ldlt.matrixL();
    Eigen::MatrixXd LD = L * d.cwiseSqrt().asDiagonal();
    factor_ = ldlt.transpositionsP().transpose() * LD;
  }

  BridgeCovariance cov_;
  TimeGrid grid_;
  std::vector<std::size_t> active_;
  Eigen::MatrixXd factor_;
  std::size_t clamps_ = 0;
};

inline VectorPath sample_brownian_bridge(const BridgeCovariance& cov, const TimeGrid& grid, RngStream& rng) {
  return BridgeSampler(cov, grid).sample(rng);
}

/// W(M(t_i)) for a standard Brownian motion W and non-decreasing levels M.
inline std::vector<double> sample_time_changed_bm(const std::vector<double>& M, RngStream& rng) {
  std::vector<double> w(M.size(), 0.0);
  double prev_level = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < M.size(); ++i) {
    double dm = M[i] - prev_level;
    if (dm > 0.0) acc += std::sqrt(dm) * rng.normal();
    prev_level = std::max(prev_level, M[i]);
    w[i] = acc;
  }
  return w;
}

// ---------------------------------------------------------------- service

/// Unit-mean renewal increments for a service base.
inline double renewal_increment(RenewalBase base, double scv, RngStream& rng) {
  switch (base) {
    case RenewalBase::Deterministic: return 1.0;
    case RenewalBase::Exponential: return rng.exponential();
    case RenewalBase::Gamma: return rng.gamma(1.0 / scv, scv);
  }
  return 1.0;
}

/// S_n(t) = N(n M(t)) with N the unit-rate renewal process of the base.
inline VectorPath sample_service_process(const ServiceProfile& profile, double n, const TimeGrid& grid,
                                         RngStream& rng) {
  if (!(n >= 1.0)) throw ArgumentError("sample_service_process: n must be >= 1");
  VectorPath S(grid, 1, Interpolation::Step);
  double next = renewal_increment(profile.base(), profile.scv(), rng);
  double count = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double level = n * profile.cumulative_unchecked(grid.time(i));
    while (next <= level) {
      count += 1.0;
      next += renewal_increment(profile.base(), profile.scv(), rng);
    }
    S(0, i) = count;
  }
  return S;
}

// ---------------------------------------------------------------- routing

/// Destination of one job leaving node k, or -1 for exit.
inline int draw_route(const Eigen::MatrixXd& P, std::size_t k, RngStream& rng) {
  double u = rng.uniform(), acc = 0.0;
  auto row = static_cast<Eigen::Index>(k);
  for (Eigen::Index j = 0; j < P.cols(); ++j) {
    if (P(row, j) <= 0.0) continue;
    acc += P(row, j);
    if (u < acc) return static_cast<int>(j);
  }
  return -1;
}

struct RoutingDraws {
  std::vector<std::vector<int>> dest;  ///< dest[k][l]: target of the l-th departure from k

  /// R_k^j(m): jobs among the first m departures of k routed to j.
  std::size_t count(std::size_t k, int j, std::size_t m) const {
    m = std::min(m, dest[k].size());
    return static_cast<std::size_t>(std::count(dest[k].begin(), dest[k].begin() + static_cast<long>(m), j));
  }
};

inline RoutingDraws sample_routing(const Eigen::MatrixXd& P, std::size_t per_node, RngStream& rng) {
  RoutingDraws r;
  r.dest.resize(static_cast<std::size_t>(P.rows()));
  for (std::size_t k = 0; k < r.dest.size(); ++k) {
    r.dest[k].resize(per_node);
    for (auto& d : r.dest[k]) d = draw_route(P, k, rng);
  }
  return r;
}

}  // namespace tnet
