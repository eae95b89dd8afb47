#pragma once

// Load classification, empty routing chains, two-sided discontinuity
// screening, and Monte Carlo bottleneck timelines.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tnet/diffusion.hpp"
#include "tnet/fluid.hpp"
#include "tnet/network.hpp"
#include "tnet/parallel.hpp"
#include "tnet/paths.hpp"
#include "tnet/rng.hpp"

namespace tnet {

enum class Load : char { Over = 'O', Under = 'U', Critical = 'C' };

struct LoadClassification {
  TimeGrid grid;
  std::size_t K = 0;
  double tol_c = 0.0;
  std::size_t window = 5;                  ///< EO / SO look-back and look-ahead, in grid steps
  std::vector<std::vector<Load>> load;     ///< load[k][i]
  std::vector<std::vector<char>> eo;       ///< end of overloading
  std::vector<std::vector<char>> su;       ///< start of underloading
  std::vector<std::vector<char>> so;       ///< start of overloading (sub-critical chain ends)
  std::vector<std::vector<char>> empty_y;  ///< y_k(t) within tol_c of 0

  std::vector<std::size_t> members(Load l, std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < K; ++k)
      if (load[k][i] == l) out.push_back(k);
    return out;
  }
  std::vector<std::size_t> O(std::size_t i) const { return members(Load::Over, i); }
  std::vector<std::size_t> U(std::size_t i) const { return members(Load::Under, i); }
  std::vector<std::size_t> C(std::size_t i) const { return members(Load::Critical, i); }
  std::vector<std::size_t> EO(std::size_t i) const { return flagged(eo, i); }
  std::vector<std::size_t> SU(std::size_t i) const { return flagged(su, i); }
  std::vector<std::size_t> SO(std::size_t i) const { return flagged(so, i); }

 private:
  std::vector<std::size_t> flagged(const std::vector<std::vector<char>>& f, std::size_t i) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < K; ++k)
      if (f[k][i]) out.push_back(k);
    return out;
  }
};

/// Sets O, U, C, EO, SU (and SO) at every grid time. The regulator is
/// "increasing" on a side when it moves by more than tol_c over two steps;
/// at the horizon ends only the available side is tested.
inline LoadClassification classify_loads(const FluidSolution& fluid, std::size_t window = 5) {
  LoadClassification c;
  c.grid = fluid.Q.grid();
  c.K = fluid.Q.dim();
  c.tol_c = fluid.tol_c;
  c.window = std::max<std::size_t>(1, window);
  const std::size_t m = c.grid.size(), K = c.K;
  const double tol = c.tol_c;
  auto mk = [&] { return std::vector<std::vector<char>>(K, std::vector<char>(m, 0)); };
  c.load.assign(K, std::vector<Load>(m, Load::Critical));
  c.eo = mk();
  c.su = mk();
  c.so = mk();
  c.empty_y = mk();
  for (std::size_t k = 0; k < K; ++k) {
    auto pos = [&](std::size_t i) { return fluid.Q(k, i) > tol; };
    for (std::size_t i = 0; i < m; ++i) {
      c.empty_y[k][i] = std::abs(fluid.Y(k, i)) <= tol;
      if (pos(i)) {
        c.load[k][i] = Load::Over;
        continue;
      }
      std::size_t lo = i >= 2 ? i - 2 : 0, hi = std::min(m - 1, i + 2);
      bool has_left = i > 0, has_right = i + 1 < m;
      bool inc_left = has_left && fluid.Y(k, i) - fluid.Y(k, lo) > tol;
      bool inc_right = has_right && fluid.Y(k, hi) - fluid.Y(k, i) > tol;
      bool under = (inc_left || !has_left) && (inc_right || !has_right) && (has_left || has_right);
      if (under) {
        c.load[k][i] = Load::Under;
        continue;
      }
      // Critical from here on.
      if (i > 0) {
        bool all = true;
        for (std::size_t s = i > c.window ? i - c.window : 0; s < i; ++s) all = all && pos(s);
        c.eo[k][i] = all;
      }
      c.su[k][i] = has_left && !inc_left && inc_right;
      if (i + 1 < m) {
        bool all = true;
        for (std::size_t s = i + 1; s <= std::min(m - 1, i + c.window); ++s) all = all && pos(s);
        c.so[k][i] = all;
      }
    }
  }
  return c;
}

// ------------------------------------------------------------------- chains

struct Chain {
  std::vector<std::size_t> nodes;  ///< j_0 (the node it precedes), j_1, ..., j_m
  bool cyclic = false;
  bool empty = true;               ///< y_{j_k}(t) = 0 for k >= 1 (always true for enumerated chains)
  bool critical = false;           ///< cyclic, or j_m at the end of overloading
  bool sub_critical = false;       ///< cyclic, or j_m at the start of overloading
};

/// Empty chains preceding each node at grid index i. Links go to upstream
/// nodes: j_k feeds j_{k-1}, i.e. p_{j_k, j_{k-1}} > 0. Depth is capped at
/// K + 1 links so every cycle is seen.
inline std::vector<Chain> find_chains(const NetworkSpec& spec, const LoadClassification& cls, std::size_t i,
                                      std::optional<std::size_t> node = std::nullopt) {
  std::vector<Chain> out;
  const std::size_t K = spec.K;
  std::vector<std::size_t> path;
  auto emit = [&](bool cyclic) {
    Chain ch;
    ch.nodes = path;
    ch.cyclic = cyclic;
    std::size_t last = path.back();
    ch.critical = cyclic || cls.eo[last][i];
    ch.sub_critical = cyclic || cls.so[last][i];
    out.push_back(std::move(ch));
  };
  auto dfs = [&](auto&& self) -> void {
    if (path.size() > K + 1) return;
    std::size_t cur = path.back();
    for (std::size_t l = 0; l < K; ++l) {
      if (!(spec.P(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(cur)) > 0.0)) continue;
      if (!cls.empty_y[l][i]) continue;
      bool seen = std::find(path.begin(), path.end(), l) != path.end();
      path.push_back(l);
      emit(seen);
      if (!seen) self(self);
      path.pop_back();
    }
  };
  for (std::size_t j0 = 0; j0 < K; ++j0) {
    if (node && *node != j0) continue;
    path = {j0};
    dfs(dfs);
  }
  return out;
}

inline std::vector<Chain> find_chains(const NetworkSpec& spec, const FluidSolution& fluid, double t) {
  auto cls = classify_loads(fluid);
  return find_chains(spec, cls, cls.grid.nearest_index(t));
}

// ---------------------------------------------------------- discontinuities

struct ConditionCheck {
  bool a = false;  ///< end of overloading + sub-critical chain
  bool b = false;  ///< start of underloading + critical chain
  bool c = false;  ///< not underloaded + both chain kinds
  bool separated_predicted = false;  ///< (c) with the node overloaded
  bool any() const { return a || b || c; }
  std::vector<std::string> labels() const {
    std::vector<std::string> l;
    if (a) l.push_back("a");
    if (b) l.push_back("b");
    if (c) l.push_back("c");
    return l;
  }
  /// Inequality pattern a two-sided jump would have to follow.
  std::string pattern() const {
    if (a) return "D(t-) < D(t) = 0 < D(t+)";
    if (b) return "D(t-) > D(t) > D(t+) = 0";
    if (separated_predicted) return "D(t) < min(D(t-), D(t+))";
    if (c) return "unspecified";
    return "";
  }
};

inline ConditionCheck check_conditions(const NetworkSpec& spec, const LoadClassification& cls, std::size_t i,
                                       std::size_t node) {
  ConditionCheck r;
  auto chains = find_chains(spec, cls, i, node);
  bool crit = false, sub = false;
  for (const auto& ch : chains) {
    crit = crit || ch.critical;
    sub = sub || ch.sub_critical;
  }
  r.a = cls.eo[node][i] && sub;
  r.b = cls.su[node][i] && crit;
  r.c = cls.load[node][i] != Load::Under && crit && sub;
  r.separated_predicted = r.c && cls.load[node][i] == Load::Over;
  return r;
}

struct DiscontinuityEvent {
  double t = 0.0;
  std::size_t node = 0;
  std::string type;  ///< most frequent observed type, or "none"
  std::map<std::string, std::size_t> observed;  ///< type -> sample count
  ConditionCheck conditions;
  bool consistent = true;  ///< two-sided observations only where a condition holds
};

/// Observed type of a grid-level jump: values at i-1, i, i+1 compared
/// against a noise floor from the path's own increments.
inline std::string grid_jump_type(const VectorPath& v, std::size_t k, std::size_t i, double floor) {
  if (i == 0 || i + 1 >= v.size()) return "none";
  return discontinuity_type(v(k, i - 1), v(k, i), v(k, i + 1), floor);
}

/// Noise floor for grid jumps: 8 x 1.4826 x median |netput increment|,
/// maximised over nodes (queue increments mix all netput coordinates).
inline double jump_floor(const VectorPath& x) {
  double best = 0.0;
  std::vector<double> inc;
  for (std::size_t k = 0; k < x.dim(); ++k) {
    inc.clear();
    for (std::size_t i = 1; i < x.size(); ++i) inc.push_back(std::abs(x(k, i) - x(k, i - 1)));
    if (inc.empty()) continue;
    std::nth_element(inc.begin(), inc.begin() + inc.size() / 2, inc.end());
    best = std::max(best, inc[inc.size() / 2]);
  }
  return std::max(1e-9, 8.0 * 1.4826 * best);
}

/// Candidate times are the regime changes of the fluid regulator; each is
/// screened against the necessary conditions and cross-checked on the
/// supplied diffusion queue samples.
inline std::vector<DiscontinuityEvent> discontinuity_report(const NetworkSpec& spec, const FluidSolution& fluid,
                                                            const std::vector<DiffusionSample>& samples,
                                                            const DirectionalRegulator* reg = nullptr) {
  std::optional<DirectionalRegulator> own;
  if (!reg) reg = &own.emplace(fluid.X, spec.P);
  auto cls = classify_loads(fluid);
  const auto& g = cls.grid;
  std::set<std::size_t> cand;
  for (auto t : reg->regime_changes()) {
    cand.insert(t);
    if (t > 0) cand.insert(t - 1);
  }
  std::vector<double> floors(samples.size());
  for (std::size_t r = 0; r < samples.size(); ++r) floors[r] = jump_floor(samples[r].X);

  std::vector<DiscontinuityEvent> out;
  for (std::size_t i : cand) {
    if (i == 0 || i + 1 >= g.size()) continue;
    for (std::size_t k = 0; k < spec.K; ++k) {
      DiscontinuityEvent ev;
      ev.t = g.time(i);
      ev.node = k;
      ev.conditions = check_conditions(spec, cls, i, k);
      for (std::size_t r = 0; r < samples.size(); ++r) {
        auto ty = grid_jump_type(samples[r].Q, k, i, floors[r]);
        if (ty != "none") ++ev.observed[ty];
      }
      std::size_t best = 0;
      ev.type = "none";
      for (const auto& [ty, n] : ev.observed)
        if (n > best) best = n, ev.type = ty;
      ev.consistent = !ev.observed.count("separated") || ev.conditions.any();
      if (best > 0 || ev.conditions.any()) out.push_back(std::move(ev));
    }
  }
  return out;
}

inline nlohmann::json discontinuity_json(const DiscontinuityEvent& e) {
  nlohmann::json obs = nlohmann::json::object();
  for (const auto& [ty, n] : e.observed) obs[ty] = n;
  return {{"t", e.t},
          {"node", e.node + 1},
          {"type", e.type},
          {"observed", obs},
          {"conditions", e.conditions.labels()},
          {"pattern", e.conditions.pattern()},
          {"consistent", e.consistent}};
}

// ----------------------------------------------------------------- timeline

struct BottleneckOptions {
  std::size_t reps = 500;
  double delta_rel = 1e-6;  ///< delta_b = delta_rel (1 + sup |Xbar|)
  double theta = 0.5;
  bool discontinuities = true;
  std::size_t disc_samples = 50;  ///< queue samples kept for the discontinuity screen
};

struct Interval {
  double a, b;
};

struct TimelinePhase {
  double a, b;
  std::vector<std::size_t> set;
};

struct BottleneckReport {
  TimeGrid grid;
  std::size_t K = 0, reps = 0;
  double delta_b = 0.0, theta = 0.5;
  VectorPath exceed;    ///< fraction of reps with |Zhat_k(t)| > delta_b
  VectorPath mean_abs;  ///< mean |Zhat_k(t)|
  VectorPath var;       ///< sample variance of Zhat_k(t)
  std::vector<std::vector<char>> flag;
  std::vector<std::vector<Interval>> intervals;
  std::vector<std::pair<double, std::size_t>> counts;  ///< (t, count) at change points
  std::vector<DiscontinuityEvent> discontinuities;
  std::vector<CrossingTimes> crossings;  ///< density crossings vs fluid emptying (single entry only)

  std::vector<std::size_t> set_at(std::size_t i) const {
    std::vector<std::size_t> s;
    for (std::size_t k = 0; k < K; ++k)
      if (flag[k][i]) s.push_back(k);
    return s;
  }

  /// Maximal stretches with a constant bottleneck set; phases shorter than
  /// min_len are absorbed into the preceding phase.
  std::vector<TimelinePhase> phases(double min_len = 0.0) const {
    std::vector<TimelinePhase> raw;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      auto s = set_at(i);
      double t = grid.time(i);
      if (raw.empty() || raw.back().set != s) {
        if (!raw.empty()) raw.back().b = t;
        raw.push_back({t, grid.t1(), s});
      }
    }
    if (min_len <= 0.0) return raw;
    std::vector<TimelinePhase> out;
    for (auto& p : raw) {
      if (!out.empty() && (p.b - p.a < min_len || out.back().set == p.set)) {
        out.back().b = p.b;
        continue;
      }
      out.push_back(p);
    }
    // A short leading phase can leave equal neighbours behind; merge again.
    std::vector<TimelinePhase> merged;
    for (auto& p : out) {
      if (!merged.empty() && merged.back().set == p.set) merged.back().b = p.b;
      else merged.push_back(p);
    }
    return merged;
  }
};

inline BottleneckReport bottleneck_timeline(const DiffusionModel& model, const RngStream& rng,
                                            const BottleneckOptions& opt = {}) {
  const auto& spec = model.spec();
  if (!spec.constant_rates()) throw NotSupportedError("bottleneck_timeline: needs constant service rates");
  if (opt.reps == 0) throw ArgumentError("bottleneck_timeline: reps must be positive");
  const auto& g = spec.horizon;
  const std::size_t K = spec.K, m = g.size(), R = opt.reps;
  BottleneckReport rep;
  rep.grid = g;
  rep.K = K;
  rep.reps = R;
  rep.theta = opt.theta;
  rep.delta_b = opt.delta_rel * (1.0 + sup_norm(model.fluid().X));

  std::vector<VectorPath> Z(R);
  std::size_t keep = opt.discontinuities ? std::min(opt.disc_samples, R) : 0;
  std::vector<DiffusionSample> kept(keep);
  parallel_for(R, [&](std::size_t r) {
    auto s = model.sample(rng.substream(r));
    Z[r] = s.Z;
    if (r < keep) kept[r] = std::move(s);
  });

  rep.exceed = VectorPath(g, K, Interpolation::Step);
  rep.mean_abs = VectorPath(g, K, Interpolation::Step);
  rep.var = VectorPath(g, K, Interpolation::Step);
  rep.flag.assign(K, std::vector<char>(m, 0));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < m; ++i) {
      double cnt = 0, sa = 0, s1 = 0, s2 = 0;
      for (std::size_t r = 0; r < R; ++r) {
        double v = Z[r](k, i);
        if (std::abs(v) > rep.delta_b) cnt += 1;
        sa += std::abs(v);
        s1 += v;
        s2 += v * v;
      }
      double n = static_cast<double>(R);
      rep.exceed(k, i) = cnt / n;
      rep.mean_abs(k, i) = sa / n;
      rep.var(k, i) = R > 1 ? std::max(0.0, (s2 - s1 * s1 / n) / (n - 1)) : 0.0;
      rep.flag[k][i] = rep.exceed(k, i) > opt.theta;
    }

  rep.intervals.assign(K, {});
  for (std::size_t k = 0; k < K; ++k) {
    std::optional<double> start;
    for (std::size_t i = 0; i < m; ++i) {
      if (rep.flag[k][i] && !start) start = g.time(i);
      if (!rep.flag[k][i] && start) {
        rep.intervals[k].push_back({*start, g.time(i)});
        start.reset();
      }
    }
    if (start) rep.intervals[k].push_back({*start, g.t1()});
  }
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t c = rep.set_at(i).size();
    if (rep.counts.empty() || rep.counts.back().second != c) rep.counts.emplace_back(g.time(i), c);
  }
  if (keep > 0) rep.discontinuities = discontinuity_report(spec, model.fluid(), kept, &model.regulator());
  if (spec.J() == 1) rep.crossings = crossing_times(spec, &model.fluid());
  return rep;
}

inline BottleneckReport bottleneck_timeline(const NetworkSpec& spec, const RngStream& rng,
                                            const BottleneckOptions& opt = {}) {
  return bottleneck_timeline(DiffusionModel(spec), rng, opt);
}

inline nlohmann::json bottleneck_json(const BottleneckReport& r) {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t k = 0; k < r.K; ++k) {
    nlohmann::json iv = nlohmann::json::array();
    for (const auto& x : r.intervals[k]) iv.push_back({x.a, x.b});
    nodes.push_back({{"node", k + 1}, {"intervals", iv}});
  }
  nlohmann::json counts = nlohmann::json::array();
  for (const auto& [t, c] : r.counts) counts.push_back({{"t", t}, {"count", c}});
  nlohmann::json disc = nlohmann::json::array();
  for (const auto& e : r.discontinuities) disc.push_back(discontinuity_json(e));
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& p : r.phases()) {
    std::vector<std::size_t> s;
    for (auto k : p.set) s.push_back(k + 1);
    phases.push_back({{"a", p.a}, {"b", p.b}, {"set", s}});
  }
  nlohmann::json j = {{"nodes", nodes},
                      {"counts", counts},
                      {"discontinuities", disc},
                      {"phases", phases},
                      {"params", {{"reps", r.reps}, {"delta_b", r.delta_b}, {"theta_b", r.theta}}}};
  if (!r.crossings.empty()) j["endpoint_candidates"] = crossing_times_json(r.crossings);
  return j;
}

}  // namespace tnet
