#pragma once

// Diffusion limits: netput sampling, pointwise queue limit via the
// directional regulator, tandem path-level closed forms, workload.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tnet/fluid.hpp"
#include "tnet/network.hpp"
#include "tnet/parallel.hpp"
#include "tnet/paths.hpp"
#include "tnet/reflection.hpp"
#include "tnet/rng.hpp"
#include "tnet/stochastic.hpp"

namespace tnet {

struct DiffusionSample {
  VectorPath X;        ///< netput Xhat = bridge - service + routing
  VectorPath Q;        ///< queue limit (empty until computed)
  VectorPath Z;        ///< workload (constant rates only)
  VectorPath bridge;   ///< W0 o F per node (zero off the entry nodes)
  VectorPath service;  ///< sigma_k W_k o M_k - sum_l p_{l,k} sigma_l W_l o M_l
  VectorPath routing;  ///< sum_l Rhat_{l,k} o Dbar_l
};

/// Holds the fluid solution, the precomputed directional regulator and the
/// bridge sampler for one spec; sampling is thread-safe.
class DiffusionModel {
 public:
  explicit DiffusionModel(const NetworkSpec& spec)
      : spec_(spec), fluid_(fluid_solve(spec)), reg_(fluid_.X, spec.P) {
    const auto& g = spec.horizon;
    bridge_ = std::make_unique<BridgeSampler>(BridgeCovariance(spec), g);
    M_.assign(spec.K, std::vector<double>(g.size()));
    auto Dbar = fluid_departures(spec, fluid_);
    Dbar_.assign(spec.K, std::vector<double>(g.size()));
    for (std::size_t k = 0; k < spec.K; ++k)
      for (std::size_t i = 0; i < g.size(); ++i) {
        M_[k][i] = spec.services[k].cumulative_unchecked(g.time(i));
        // Fluid departures are non-decreasing up to solver tolerance.
        Dbar_[k][i] = std::max(i ? Dbar_[k][i - 1] : 0.0, Dbar(k, i));
      }
  }

  const NetworkSpec& spec() const noexcept { return spec_; }
  const FluidSolution& fluid() const noexcept { return fluid_; }
  const DirectionalRegulator& regulator() const noexcept { return reg_; }
  std::size_t bridge_clamps() const noexcept { return bridge_->clamp_count(); }

  DiffusionSample sample_netput(const RngStream& rng) const {
    const auto& g = spec_.horizon;
    const std::size_t K = spec_.K, m = g.size();
    DiffusionSample s;
    s.X = VectorPath(g, K);
    s.bridge = VectorPath(g, K);
    s.service = VectorPath(g, K);
    s.routing = VectorPath(g, K);

    RngStream rb = rng.substream(1), rs = rng.substream(2), rr = rng.substream(3);
    VectorPath W0 = bridge_->sample(rb);
    for (std::size_t j = 0; j < spec_.J(); ++j)
      for (std::size_t i = 0; i < m; ++i) s.bridge(spec_.entry_nodes[j], i) = W0(j, i);

    std::vector<std::vector<double>> WM(K);
    for (std::size_t k = 0; k < K; ++k) {
      WM[k] = sample_time_changed_bm(M_[k], rs);
      double sigma = std::sqrt(spec_.services[k].scv());
      for (auto& v : WM[k]) v *= sigma;
    }
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t i = 0; i < m; ++i) {
        double v = WM[k][i];
        for (std::size_t l = 0; l < K; ++l)
          v -= spec_.P(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) * WM[l][i];
        s.service(k, i) = v;
      }

    // Multinomial routing fluctuation out of each node l, time-changed by its
    // fluid departures: Cov = diag(p) - p p^T over destinations.
    for (std::size_t l = 0; l < K; ++l) {
      auto row = spec_.P.row(static_cast<Eigen::Index>(l));
      bool degenerate = true;
      for (Eigen::Index k = 0; k < row.size(); ++k)
        if (row(k) > 0.0 && row(k) < 1.0) degenerate = false;
      if (degenerate) continue;
      double exit_p = std::max(0.0, 1.0 - row.sum());
      std::vector<double> acc(K + 1, 0.0);
      double prev = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        double dt = Dbar_[l][i] - prev;
        prev = Dbar_[l][i];
        if (dt > 0.0) {
          double sd = std::sqrt(dt), S = 0.0;
          std::vector<double> xi(K + 1);
          for (std::size_t c = 0; c <= K; ++c) {
            double p = c < K ? row(static_cast<Eigen::Index>(c)) : exit_p;
            xi[c] = rr.normal();
            S += std::sqrt(p) * xi[c];
          }
          for (std::size_t k = 0; k < K; ++k) {
            double p = row(static_cast<Eigen::Index>(k));
            acc[k] += sd * (std::sqrt(p) * xi[k] - p * S);
          }
        }
        for (std::size_t k = 0; k < K; ++k) s.routing(k, i) += acc[k];
      }
    }
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t i = 0; i < m; ++i) s.X(k, i) = s.bridge(k, i) - s.service(k, i) + s.routing(k, i);
    return s;
  }

  /// Netput plus Qhat = Delta_Xhat(Xbar) and, for constant rates, Zhat.
  DiffusionSample sample(const RngStream& rng) const {
    DiffusionSample s = sample_netput(rng);
    s.Q = reg_.apply(s.X).value;
    if (spec_.constant_rates()) s.Z = workload_of(s.Q);
    return s;
  }

  VectorPath workload_of(const VectorPath& Q) const {
    if (!spec_.constant_rates()) throw NotSupportedError("diffusion workload needs constant service rates");
    VectorPath Z = Q;
    for (std::size_t k = 0; k < spec_.K; ++k) {
      double mu = spec_.services[k].rate(spec_.horizon.t0());
      for (std::size_t i = 0; i < Z.size(); ++i) Z(k, i) = mu > 0.0 ? Q(k, i) / mu : 0.0;
    }
    return Z;
  }

 private:
  NetworkSpec spec_;
  FluidSolution fluid_;
  DirectionalRegulator reg_;
  std::unique_ptr<BridgeSampler> bridge_;
  std::vector<std::vector<double>> M_;
  std::vector<std::vector<double>> Dbar_;
};

inline DiffusionSample sample_diffusion_netput(const NetworkSpec& spec, const RngStream& rng) {
  return DiffusionModel(spec).sample_netput(rng);
}

/// reps independent draws of Qhat(t); row r uses rng.substream(r).
inline std::vector<std::vector<double>> diffusion_queue_pointwise(const DiffusionModel& model, double t,
                                                                  const RngStream& rng, std::size_t reps) {
  const auto& g = model.spec().horizon;
  if (!g.contains(t)) throw OutOfRangeError("diffusion_queue_pointwise: t outside the horizon");
  std::size_t idx = g.nearest_index(t);
  std::vector<std::vector<double>> out(reps);
  parallel_for(reps, [&](std::size_t r) {
    auto s = model.sample(rng.substream(r));
    out[r] = s.Q.at_index(idx);
  });
  return out;
}

inline std::vector<std::vector<double>> diffusion_queue_pointwise(const NetworkSpec& spec, double t,
                                                                  const RngStream& rng, std::size_t reps) {
  return diffusion_queue_pointwise(DiffusionModel(spec), t, rng, reps);
}

/// Zhat = diag(1/mu) Qhat.
inline VectorPath diffusion_workload(const DiffusionSample& sample, const NetworkSpec& spec) {
  if (!spec.constant_rates()) throw NotSupportedError("diffusion workload needs constant service rates");
  VectorPath Z = sample.Q;
  for (std::size_t k = 0; k < spec.K; ++k) {
    double mu = spec.services[k].rate(spec.horizon.t0());
    for (std::size_t i = 0; i < Z.size(); ++i) Z(k, i) = mu > 0.0 ? sample.Q(k, i) / mu : 0.0;
  }
  return Z;
}

// ---------------------------------------------------------------- tandem

enum class TandemCase { FirstSlower, FirstFaster, Equal };  ///< mu1 < mu2, mu1 > mu2, mu1 = mu2

inline const char* tandem_case_name(TandemCase c) {
  switch (c) {
    case TandemCase::FirstSlower: return "i";
    case TandemCase::FirstFaster: return "ii";
    case TandemCase::Equal: return "iii";
  }
  return "?";
}

struct FluidPhase {
  enum class Kind { Under, Over, Crit };
  Kind kind;
  double a, b;  ///< [a, b); Over phases have z > 0 on the open interval only
};

inline const char* phase_name(FluidPhase::Kind k) {
  return k == FluidPhase::Kind::Under ? "under" : k == FluidPhase::Kind::Over ? "over" : "crit";
}

enum class Side { Left, At, Right };

struct TandemDiscontinuity {
  std::size_t node = 0;
  double t = 0.0;
  double left = 0.0, value = 0.0, right = 0.0;
  std::string type;  ///< "left", "right", "separated" or "none"
};

struct TandemPathResult {
  DiffusionSample sample;
  std::vector<TandemDiscontinuity> discontinuities;
};

/// Classifies a jump from its one-sided limits: "right" when the value equals
/// the left limit only, "left" when it equals the right limit only.
inline std::string discontinuity_type(double left, double value, double right, double tol) {
  bool l = std::abs(value - left) > tol, r = std::abs(value - right) > tol;
  if (l && r) return "separated";
  if (r) return "right";
  if (l) return "left";
  return "none";
}

/// Closed-form diffusion path of the two-node tandem with one entry law on
/// [t0, b] and constant rates. Phases of each node are computed in continuous
/// time, so nabla sets do not depend on a zero tolerance.
class TandemDiffusion {
 public:
  explicit TandemDiffusion(const NetworkSpec& spec) : model_(check(spec)), spec_(spec) {
    mu_ = {spec.services[0].rate(spec.horizon.t0()), spec.services[1].rate(spec.horizon.t0())};
    cas_ = mu_[0] < mu_[1] ? TandemCase::FirstSlower : mu_[0] > mu_[1] ? TandemCase::FirstFaster : TandemCase::Equal;
    const auto& law = spec.arrivals[0];
    phases_[0] = node_phases([&](double t) { return law.cdf(t); }, [&](double t) { return law.density(t); }, mu_[0]);
    phases_[1] = node_phases([this](double t) { return inflow2(t); }, [this](double t) { return rate2(t); }, mu_[1]);
    for (int i = 0; i < 2; ++i) {
      t_u_[i] = std::numeric_limits<double>::infinity();
      for (const auto& p : phases_[i])
        if (p.kind == FluidPhase::Kind::Under) {
          t_u_[i] = p.a;
          break;
        }
    }
  }

  TandemCase tandem_case() const noexcept { return cas_; }
  const std::vector<FluidPhase>& phases(std::size_t node) const { return phases_[node]; }
  double t_u(std::size_t node) const { return t_u_[node]; }
  const DiffusionModel& model() const noexcept { return model_; }

  /// Interior phase boundaries of a node (candidate discontinuities).
  std::vector<double> boundaries(std::size_t node) const {
    std::vector<double> out;
    const auto& g = spec_.horizon;
    for (const auto& p : phases_[node])
      if (p.a > g.t0() && p.a < g.t1()) out.push_back(p.a);
    return out;
  }

  /// End of node 1's first overload phase, if any.
  std::optional<double> tau1() const {
    for (const auto& p : phases_[0])
      if (p.kind == FluidPhase::Kind::Over && p.b < spec_.horizon.t1()) return p.b;
    return std::nullopt;
  }

  /// Qhat_node at t (value or one-sided limit) for the netput path chi.
  double queue(const VectorPath& chi, std::size_t node, double t, Side side) const {
    return queue(context(chi), node, t, side);
  }

  TandemPathResult sample(const RngStream& rng) const {
    TandemPathResult r;
    r.sample = model_.sample_netput(rng);
    const auto& chi = r.sample.X;
    const auto& g = spec_.horizon;
    Ctx ctx = context(chi);
    r.sample.Q = VectorPath(g, 2);
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t k = 0; k < 2; ++k) r.sample.Q(k, i) = queue(ctx, k, g.time(i), Side::At);
    r.sample.Z = model_.workload_of(r.sample.Q);
    std::vector<double> cand = boundaries(0);
    auto b2 = boundaries(1);
    cand.insert(cand.end(), b2.begin(), b2.end());
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    double tol = 1e-9 * (1.0 + sup_norm(chi));
    for (double t : cand)
      for (std::size_t k = 0; k < 2; ++k) {
        TandemDiscontinuity d;
        d.node = k;
        d.t = t;
        d.left = queue(ctx, k, t, Side::Left);
        d.value = queue(ctx, k, t, Side::At);
        d.right = queue(ctx, k, t, Side::Right);
        d.type = discontinuity_type(d.left, d.value, d.right, tol);
        if (d.type != "none") r.discontinuities.push_back(d);
      }
    return r;
  }

 private:
  struct Ctx {
    const VectorPath& chi;
    std::vector<double> g1;  ///< gamma_1 at grid points
  };

  Ctx context(const VectorPath& chi) const {
    Ctx ctx{chi, {}};
    const auto& g = spec_.horizon;
    std::vector<double> g1(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) g1[i] = gamma(ctx, 0, g.time(i), Side::At);
    ctx.g1 = std::move(g1);
    return ctx;
  }

  double queue(const Ctx& ctx, std::size_t node, double t, Side side) const {
    double g1 = gamma(ctx, 0, t, side);
    if (node == 0) return ctx.chi.eval(0, t) + g1;
    return ctx.chi.eval(1, t) + gamma(ctx, 1, t, side) - g1;
  }

  struct Piece {
    double lo, hi;
    Side hi_side;  ///< side used for gamma_1 at hi in the node-2 integrand
  };

  static const NetworkSpec& check(const NetworkSpec& spec) {
    if (spec.K != 2) throw ArgumentError("tandem_diffusion_path: needs K = 2");
    if (!(spec.P(0, 1) == 1.0 && spec.P(0, 0) == 0.0 && spec.P(1, 0) == 0.0 && spec.P(1, 1) == 0.0))
      throw ArgumentError("tandem_diffusion_path: P must be [[0,1],[0,0]]");
    if (spec.J() != 1 || spec.entry_nodes[0] != 0)
      throw ArgumentError("tandem_diffusion_path: needs a single entry at node 1");
    if (spec.arrivals[0].kind() == ArrivalLaw::Kind::Point)
      throw ArgumentError("tandem_diffusion_path: needs a uniform or unimodal arrival law");
    if (!spec.constant_rates()) throw ArgumentError("tandem_diffusion_path: needs constant service rates");
    if (spec.arrivals[0].support_start() != spec.horizon.t0())
      throw PreconditionError("tandem_diffusion_path: arrival support must start at t0");
    return spec;
  }

  // Fluid inflow to node 2 = departures of node 1.
  double qbar1(double t) const {
    const auto& law = spec_.arrivals[0];
    for (const auto& p : phases_[0])
      if (p.kind == FluidPhase::Kind::Over && t > p.a && t < p.b)
        return law.cdf(t) - law.cdf(p.a) - mu_[0] * (t - p.a);
    return 0.0;
  }
  double inflow2(double t) const { return spec_.arrivals[0].cdf(t) - qbar1(t); }
  double rate2(double t) const {
    for (const auto& p : phases_[0])
      if (p.kind == FluidPhase::Kind::Over && t >= p.a && t < p.b) return mu_[0];
    return spec_.arrivals[0].density(t);
  }

  double snap(double t) const {
    const auto& g = spec_.horizon;
    std::size_t i = g.nearest_index(t);
    return std::abs(g.time(i) - t) <= 1e-9 ? g.time(i) : t;
  }

  /// Continuous-time phases of a single node with cumulative inflow L,
  /// inflow rate l and service rate mu, starting empty at t0.
  std::vector<FluidPhase> node_phases(const std::function<double(double)>& L,
                                      const std::function<double(double)>& l, double mu) const {
    const auto& g = spec_.horizon;
    const double eps = 1e-12;
    auto cls = [&](double t) {
      double d = l(t) - mu;
      return d > eps ? 1 : d < -eps ? -1 : 0;
    };
    // Points where the class of l - mu changes, refined by bisection.
    std::vector<double> cuts{g.t0()};
    for (std::size_t i = 1; i < g.size(); ++i) {
      double a = g.time(i - 1), b = g.time(i);
      int ca = cls(a);
      if (cls(b) == ca) continue;
      for (int it = 0; it < 200 && b - a > 1e-14; ++it) {
        double c = 0.5 * (a + b);
        if (cls(c) == ca) a = c;
        else b = c;
      }
      cuts.push_back(snap(b));
    }
    cuts.push_back(g.t1());
    auto class_after = [&](double t) {
      auto it = std::upper_bound(cuts.begin(), cuts.end(), t);
      double a = *(it - 1), b = it == cuts.end() ? g.t1() : *it;
      return std::pair<int, double>(cls(0.5 * (std::max(a, t) + b)), b);
    };
    std::vector<FluidPhase> out;
    double t = g.t0();
    while (t < g.t1()) {
      auto [c, end] = class_after(t);
      if (end <= t) break;
      if (c < 0) {
        out.push_back({FluidPhase::Kind::Under, t, end});
        t = end;
      } else if (c == 0) {
        out.push_back({FluidPhase::Kind::Crit, t, end});
        t = end;
      } else {
        const double start = t, L0 = L(start);
        auto G = [&](double s) { return L(s) - L0 - mu * (s - start); };
        double e = g.t1();
        std::size_t i = g.floor_index(start) + 1;
        for (; i < g.size(); ++i) {
          double s = g.time(i);
          if (s <= start) continue;
          if (G(s) <= eps) {
            double a = std::max(start, g.time(i - 1)), b = s;
            for (int it = 0; it < 200 && b - a > 1e-14; ++it) {
              double mid = 0.5 * (a + b);
              if (G(mid) > eps) a = mid;
              else b = mid;
            }
            e = snap(b);
            break;
          }
        }
        out.push_back({FluidPhase::Kind::Over, start, e});
        t = e;
      }
    }
    // Merge neighbours of the same kind.
    std::vector<FluidPhase> merged;
    for (const auto& p : out) {
      if (!merged.empty() && merged.back().kind == p.kind && p.kind != FluidPhase::Kind::Over)
        merged.back().b = p.b;
      else
        merged.push_back(p);
    }
    return merged;
  }

  const FluidPhase* phase_at(std::size_t node, double t) const {
    for (const auto& p : phases_[node])
      if (t >= p.a && t < p.b) return &p;
    return &phases_[node].back();
  }

  /// End of the last stretch of regulator growth at or before t.
  double window_start(std::size_t node, double t) const {
    double a = spec_.horizon.t0();
    for (const auto& p : phases_[node])
      if (p.kind == FluidPhase::Kind::Under && p.a < t) a = std::min(p.b, t);
    return a;
  }

  /// Zero set of z within [lo, hi]: remove open Over intervals.
  std::vector<Piece> zero_pieces(std::size_t node, double lo, double hi, Side hi_side) const {
    std::vector<Piece> out;
    double cur = lo;
    for (const auto& p : phases_[node]) {
      if (p.kind != FluidPhase::Kind::Over || p.b <= lo || p.a >= hi) continue;
      if (p.a >= cur) out.push_back({cur, p.a, Side::At});
      cur = std::max(cur, p.b);
    }
    if (cur <= hi) out.push_back({cur, hi, hi_side});
    return out;
  }

  /// nabla set of node at t (or its one-sided limit) as closed pieces.
  std::vector<Piece> nabla(std::size_t node, double t, Side side) const {
    const auto& g = spec_.horizon;
    if (side == Side::At) {
      const FluidPhase* p = phase_at(node, t);
      if (p->kind == FluidPhase::Kind::Under && t > p->a) return {{t, t, Side::At}};
      return zero_pieces(node, window_start(node, t), t, Side::At);
    }
    if (side == Side::Left) {
      if (t <= g.t0()) return nabla(node, t, Side::At);
      const FluidPhase* before = phase_at(node, std::nextafter(t, -INFINITY));
      for (const auto& p : phases_[node])
        if (p.a < t && p.b >= t) before = &p;
      if (before->kind == FluidPhase::Kind::Under) return {{t, t, Side::Left}};
      double a = window_start(node, t);
      if (before->kind == FluidPhase::Kind::Over) return zero_pieces(node, a, before->a, Side::At);
      return zero_pieces(node, a, t, Side::Left);
    }
    const FluidPhase* after = phase_at(node, t);
    if (after->kind == FluidPhase::Kind::Under) return {{t, t, Side::Right}};
    return zero_pieces(node, window_start(node, t), t, Side::Right);
  }

  bool plus_branch(std::size_t node, double t, Side side) const {
    return side == Side::Right ? t < t_u_[node] : t <= t_u_[node];
  }

  double integrand(const Ctx& ctx, std::size_t node, double s, Side side) const {
    double v = -ctx.chi.eval(node, s);
    if (node == 1) {
      const auto& g = spec_.horizon;
      std::size_t i = g.nearest_index(s);
      if (side == Side::At && !ctx.g1.empty() && g.time(i) == s) v += ctx.g1[i];
      else v += gamma(ctx, 0, s, side);
    }
    return v;
  }

  double gamma(const Ctx& ctx, std::size_t node, double t, Side side) const {
    const auto& g = spec_.horizon;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& pc : nabla(node, t, side)) {
      // A one-sided degenerate piece {t} is evaluated only on its side.
      if (pc.hi > pc.lo || pc.hi_side == Side::At) best = std::max(best, integrand(ctx, node, pc.lo, Side::At));
      best = std::max(best, integrand(ctx, node, pc.hi, pc.hi_side));
      std::size_t i = g.floor_index(pc.lo) + 1;
      for (; i < g.size() && g.time(i) < pc.hi; ++i)
        if (g.time(i) > pc.lo) best = std::max(best, integrand(ctx, node, g.time(i), Side::At));
    }
    if (best == -std::numeric_limits<double>::infinity()) return 0.0;
    return plus_branch(node, t, side) ? std::max(best, 0.0) : best;
  }

  DiffusionModel model_;
  NetworkSpec spec_;
  std::array<double, 2> mu_{};
  TandemCase cas_ = TandemCase::Equal;
  std::array<std::vector<FluidPhase>, 2> phases_;
  std::array<double, 2> t_u_{};
};

inline TandemPathResult tandem_diffusion_path(const NetworkSpec& spec, const RngStream& rng) {
  return TandemDiffusion(spec).sample(rng);
}

}  // namespace tnet
