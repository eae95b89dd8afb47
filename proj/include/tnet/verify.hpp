#pragma once

// Monte Carlo convergence harness: arrivals (FSLLN), pointwise queue FCLT
// via two-sample KS, service and routing fluctuations.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tnet/diffusion.hpp"
#include "tnet/error.hpp"
#include "tnet/fluid.hpp"
#include "tnet/network.hpp"
#include "tnet/parallel.hpp"
#include "tnet/rng.hpp"
#include "tnet/simulator.hpp"
#include "tnet/stochastic.hpp"

namespace tnet {

// ---------------------------------------------------------------------- KS

struct KsResult {
  double D = 0.0;
  double p_value = 1.0;
};

/// Kolmogorov tail Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0, sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Two-sample KS distance with the asymptotic p-value, Stephens' small-sample
/// correction: lambda = (sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) D.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw ArgumentError("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double D = 0.0;
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    D = std::max(D, std::abs(i / na - j / nb));
  }
  double ne = std::sqrt(na * nb / (na + nb));
  return {D, kolmogorov_q((ne + 0.12 + 0.11 / ne) * D)};
}

/// sup_t |F_emp(t) - F(t)| for a sorted sample against a continuous or
/// stepped CDF, evaluated at the jumps.
template <class Cdf>
inline double sup_empirical_distance(const std::vector<double>& sorted, Cdf&& F) {
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    // one pass per distinct value; ties jump together
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    double f = F(sorted[i]);
    d = std::max(d, std::abs(j / n - f));
    // Left limit of F just below the atom (equal to f for continuous laws).
    double fl = F(std::nextafter(sorted[i], -INFINITY));
    d = std::max(d, std::abs(i / n - fl));
    i = j;
  }
  return d;
}

// --------------------------------------------------------------- summaries

struct PerN {
  double n = 0.0;
  std::size_t reps = 0;
  std::vector<double> stats;
  double median = 0.0, p05 = 0.0, p95 = 0.0;
  nlohmann::json extra = nlohmann::json::object();
};

struct ConvergenceResult {
  std::string check;
  nlohmann::json params = nlohmann::json::object();
  std::vector<PerN> per_n;
  std::optional<double> slope, slope_se;
  bool pass = false;
  nlohmann::json details = nlohmann::json::object();

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : per_n) {
      nlohmann::json row = {{"n", r.n}, {"reps", r.reps}, {"median", r.median}, {"p05", r.p05}, {"p95", r.p95}};
      for (const auto& [k, v] : r.extra.items()) row[k] = v;
      rows.push_back(row);
    }
    nlohmann::json j = {{"check", check}, {"params", params}, {"per_n", rows}, {"pass", pass}};
    j["slope"] = slope ? nlohmann::json(*slope) : nlohmann::json(nullptr);
    if (slope_se) j["slope_se"] = *slope_se;
    if (!details.empty()) j["details"] = details;
    return j;
  }
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& s, double q) {
  if (s.empty()) return 0.0;
  double pos = q * static_cast<double>(s.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

inline void summarise(PerN& r) {
  std::vector<double> s = r.stats;
  std::sort(s.begin(), s.end());
  r.reps = s.size();
  r.median = quantile_sorted(s, 0.5);
  r.p05 = quantile_sorted(s, 0.05);
  r.p95 = quantile_sorted(s, 0.95);
}

/// OLS slope of log(median) on log(n) with its standard error.
inline void fit_slope(ConvergenceResult& res) {
  if (res.per_n.size() < 3) return;
  std::vector<double> x, y;
  for (const auto& r : res.per_n) {
    if (!(r.median > 0.0)) return;
    x.push_back(std::log(r.n));
    y.push_back(std::log(r.median));
  }
  const double m = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / m, my += y[i] / m;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sxx += (x[i] - mx) * (x[i] - mx), sxy += (x[i] - mx) * (y[i] - my);
  double b = sxy / sxx, a = my - b * mx, rss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) rss += std::pow(y[i] - a - b * x[i], 2);
  res.slope = b;
  res.slope_se = m > 2 ? std::sqrt(rss / (m - 2) / sxx) : 0.0;
}

inline void require_increasing(const std::vector<double>& ns, const char* who) {
  if (ns.size() < 3) throw ArgumentError(std::string(who) + ": needs at least 3 values of n");
  for (std::size_t i = 1; i < ns.size(); ++i)
    if (!(ns[i] > ns[i - 1])) throw ArgumentError(std::string(who) + ": n values must increase");
  if (!(ns.front() >= 1.0)) throw ArgumentError(std::string(who) + ": n must be >= 1");
}

}  // namespace detail

// ----------------------------------------------------------------- arrivals

struct FsllnOptions {
  double slope_lo = -0.6, slope_hi = -0.4;
  double scaled_lo = 0.5, scaled_hi = 1.2;  ///< band for sqrt(n) x median at the largest n
};

/// Per n: max over entry nodes of sup_t |A_n(t)/n - F(t)|, reps draws.
inline ConvergenceResult check_fslln_arrivals(const NetworkSpec& spec, const std::vector<double>& n_list,
                                              std::size_t reps, const RngStream& rng,
                                              const FsllnOptions& opt = {}) {
  detail::require_increasing(n_list, "check_fslln_arrivals");
  if (reps == 0) throw ArgumentError("check_fslln_arrivals: reps must be positive");
  ConvergenceResult res;
  res.check = "fslln_arrivals";
  res.params = {{"n", n_list}, {"reps", reps}, {"spec", spec.name}};
  for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
    PerN row;
    row.n = n_list[ni];
    row.stats.assign(reps, 0.0);
    auto n = static_cast<std::size_t>(n_list[ni]);
    parallel_for(reps, [&](std::size_t r) {
      RngStream s = rng.substream(1000003ULL * (ni + 1) + r);
      auto ep = sample_arrival_epochs(spec, n, s);
      double d = 0.0;
      for (std::size_t j = 0; j < ep.size(); ++j)
        d = std::max(d, sup_empirical_distance(ep[j], [&](double t) { return spec.arrivals[j].cdf(t); }));
      row.stats[r] = d;
    });
    detail::summarise(row);
    row.extra["scaled_median"] = std::sqrt(row.n) * row.median;
    res.per_n.push_back(std::move(row));
  }
  detail::fit_slope(res);
  double scaled = res.per_n.back().extra["scaled_median"].get<double>();
  bool slope_ok = res.slope && *res.slope >= opt.slope_lo && *res.slope <= opt.slope_hi;
  bool scaled_ok = scaled >= opt.scaled_lo && scaled <= opt.scaled_hi;
  res.details = {{"slope_band", {opt.slope_lo, opt.slope_hi}},
                 {"scaled_band", {opt.scaled_lo, opt.scaled_hi}},
                 {"slope_ok", slope_ok},
                 {"scaled_ok", scaled_ok}};
  res.pass = slope_ok && scaled_ok;
  return res;
}

// -------------------------------------------------------------- queue FCLT

struct FcltOptions {
  double level = 0.01;
  std::size_t guard_steps = 5;  ///< refuse t within this many steps of a regime change
  std::optional<NetworkSpec> limit_spec;  ///< spec fed to the limit sampler (negative controls)
  std::vector<std::size_t> nodes;         ///< 0-based; empty = all
};

/// Grid times where the limit may jump: regime changes of the fluid
/// regulator (zero-set toggles, idle/busy switches).
inline std::vector<double> candidate_discontinuities(const DiffusionModel& model) {
  std::vector<double> out;
  for (auto i : model.regulator().regime_changes()) out.push_back(model.spec().horizon.time(i));
  return out;
}

/// Two-sample KS between sqrt(n)(Q_n(t)/n - Qbar(t)) from the simulator and
/// Qhat(t) from the limit sampler, per node. Both sides use reps samples.
inline ConvergenceResult check_fclt_queue(const NetworkSpec& spec, double t, std::size_t n, std::size_t reps,
                                          const RngStream& rng, const FcltOptions& opt = {}) {
  if (reps == 0 || n == 0) throw ArgumentError("check_fclt_queue: n and reps must be positive");
  const auto& g = spec.horizon;
  if (!g.contains(t)) throw OutOfRangeError("check_fclt_queue: t outside the horizon");
  DiffusionModel model(spec);
  const double guard = static_cast<double>(opt.guard_steps) * g.h();
  for (double c : candidate_discontinuities(model))
    if (std::abs(c - t) < guard - 1e-12)
      throw PreconditionError("check_fclt_queue: t = " + std::to_string(t) +
                              " lies within " + std::to_string(opt.guard_steps) +
                              " grid steps of a possible discontinuity at " + std::to_string(c) +
                              "; pick t at least that far away");

  ConvergenceResult res;
  res.check = "fclt_queue";
  res.params = {{"t", t}, {"n", n}, {"reps", reps}, {"level", opt.level}, {"spec", spec.name}};
  if (opt.limit_spec) res.params["limit_spec"] = opt.limit_spec->name;

  // Centre on the fluid of whichever spec the limit side uses, so a wrong
  // spec shows up as a location shift.
  std::optional<DiffusionModel> other;
  const DiffusionModel& lim = opt.limit_spec ? other.emplace(*opt.limit_spec) : model;
  if (!(lim.spec().horizon == g) || lim.spec().K != spec.K)
    throw ArgumentError("check_fclt_queue: limit spec must share the grid and node count");
  const auto& fluidQ = lim.fluid().Q;
  std::vector<std::vector<double>> sim(reps);
  std::vector<char> trunc(reps, 0);
  SimOptions so;
  so.keep_event_log = false;
  parallel_for(reps, [&](std::size_t r) {
    auto tr = simulate(spec, n, rng.substream(2 * r), so);
    trunc[r] = tr.truncated;
    sim[r] = diffusion_scale_at(tr, fluidQ, t);
  });
  auto limit = diffusion_queue_pointwise(lim, t, rng.substream(0x5eed), reps);

  std::vector<std::size_t> nodes = opt.nodes;
  if (nodes.empty())
    for (std::size_t k = 0; k < spec.K; ++k) nodes.push_back(k);
  PerN row;
  row.n = static_cast<double>(n);
  nlohmann::json per_node = nlohmann::json::array();
  bool all = true;
  for (auto k : nodes) {
    if (k >= spec.K) throw ArgumentError("check_fclt_queue: node out of range");
    std::vector<double> a(reps), b(reps);
    for (std::size_t r = 0; r < reps; ++r) a[r] = sim[r][k], b[r] = limit[r][k];
    auto ks = ks_two_sample(a, b);
    row.stats.push_back(ks.D);
    bool ok = ks.p_value >= opt.level;
    all = all && ok;
    double ma = 0, mb = 0;
    for (std::size_t r = 0; r < reps; ++r) ma += a[r] / reps, mb += b[r] / reps;
    per_node.push_back({{"node", k + 1}, {"ks", ks.D}, {"p_value", ks.p_value}, {"reject", !ok},
                        {"sim_mean", ma}, {"limit_mean", mb}});
  }
  detail::summarise(row);
  row.extra["nodes"] = per_node;
  res.per_n.push_back(std::move(row));
  res.details = {{"truncated_runs", std::count(trunc.begin(), trunc.end(), 1)}};
  res.pass = all;
  return res;
}

// --------------------------------------------------------- service, routing

struct ServiceRoutingOptions {
  double slope_lo = -0.6, slope_hi = -0.4;
  double se_band = 5.0;
  double t_var = 1.0;  ///< time at which the service variance is compared
};

/// Service: sup_t |S_n(t)/n - M(t)| per node, slope of medians, and the
/// variance of sqrt(n)(S_n(t)/n - M(t)) against scv M(t). Routing: for each
/// node with a non-degenerate row, sum over destinations of the variance of
/// (R(n) - n p) / sqrt(n) against sum p (1 - p).
inline ConvergenceResult check_service_routing(const NetworkSpec& spec, const std::vector<double>& n_list,
                                               std::size_t reps, const RngStream& rng,
                                               const ServiceRoutingOptions& opt = {}) {
  detail::require_increasing(n_list, "check_service_routing");
  if (reps < 2) throw ArgumentError("check_service_routing: reps must be >= 2");
  const auto& g = spec.horizon;
  const std::size_t K = spec.K;
  const double tv = std::clamp(opt.t_var, g.t0(), g.t1());
  ConvergenceResult res;
  res.check = "service_routing";
  res.params = {{"n", n_list}, {"reps", reps}, {"t_var", tv}, {"spec", spec.name}};

  // Per-node slopes; res.slope holds the least negative one.
  std::vector<ConvergenceResult> node_res(K);
  nlohmann::json var_rows = nlohmann::json::array();
  for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
    const double n = n_list[ni];
    std::vector<std::vector<double>> sup(K, std::vector<double>(reps)), fl(K, std::vector<double>(reps));
    parallel_for(reps, [&](std::size_t r) {
      RngStream s = rng.substream(1000003ULL * (ni + 1) + r);
      for (std::size_t k = 0; k < K; ++k) {
        const auto& prof = spec.services[k];
        auto S = sample_service_process(prof, n, g, s);
        double d = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i)
          d = std::max(d, std::abs(S(0, i) / n - prof.cumulative_unchecked(g.time(i))));
        sup[k][r] = d;
        fl[k][r] = std::sqrt(n) * (S.eval(0, tv) / n - prof.cumulative_unchecked(tv));
      }
    });
    PerN row;
    row.n = n;
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t k = 0; k < K; ++k) {
      PerN nr;
      nr.n = n;
      nr.stats = sup[k];
      detail::summarise(nr);
      node_res[k].per_n.push_back(nr);
      row.stats.push_back(nr.median);
      double m1 = 0, m2 = 0, R = static_cast<double>(reps);
      for (double v : fl[k]) m1 += v / R;
      for (double v : fl[k]) m2 += (v - m1) * (v - m1) / (R - 1);
      double target = spec.services[k].scv() * spec.services[k].cumulative_unchecked(tv);
      double se = m2 * std::sqrt(2.0 / (R - 1));
      nodes.push_back({{"node", k + 1}, {"median_sup", nr.median}, {"var", m2}, {"var_target", target}, {"var_se", se}});
      if (ni + 1 == n_list.size()) {
        bool ok = std::abs(m2 - target) <= opt.se_band * std::max(se, 1e-12);
        var_rows.push_back({{"node", k + 1}, {"var", m2}, {"target", target}, {"se", se}, {"ok", ok}});
      }
    }
    detail::summarise(row);
    row.extra["nodes"] = nodes;
    res.per_n.push_back(std::move(row));
  }
  nlohmann::json slopes = nlohmann::json::array();
  double worst = -INFINITY;
  for (std::size_t k = 0; k < K; ++k) {
    bool degenerate = spec.services[k].base() == RenewalBase::Deterministic;
    detail::fit_slope(node_res[k]);
    double sl = node_res[k].slope.value_or(NAN);
    bool ok = degenerate || (sl >= opt.slope_lo && sl <= opt.slope_hi);
    slopes.push_back({{"node", k + 1}, {"slope", node_res[k].slope ? nlohmann::json(sl) : nlohmann::json(nullptr)},
                      {"degenerate", degenerate}, {"ok", ok}});
    if (!degenerate) worst = std::max(worst, sl);
    if (degenerate) {
      // Floor-function fluctuation only; the variance comparison is moot.
      for (auto& v : var_rows)
        if (v["node"] == k + 1) {
          v["ok"] = true;
          v["degenerate"] = true;
        }
    }
  }
  bool service_ok = true;
  for (const auto& s : slopes) service_ok = service_ok && s["ok"].get<bool>();
  for (const auto& v : var_rows) service_ok = service_ok && v["ok"].get<bool>();
  if (std::isfinite(worst)) res.slope = worst;

  // Routing: n departures per node at the largest n.
  nlohmann::json routing = nlohmann::json::array();
  bool routing_ok = true;
  const auto nr = static_cast<std::size_t>(n_list.back());
  for (std::size_t l = 0; l < K; ++l) {
    auto row = spec.P.row(static_cast<Eigen::Index>(l));
    double target = 0.0;
    for (Eigen::Index k = 0; k < row.size(); ++k) target += row(k) * (1.0 - row(k));
    if (target <= 0.0) continue;
    std::vector<double> tr(reps);
    parallel_for(reps, [&](std::size_t r) {
      RngStream s = rng.substream(0x7000000ULL + 1009ULL * l + r);
      std::vector<double> cnt(K, 0.0);
      for (std::size_t m = 0; m < nr; ++m) {
        int d = draw_route(spec.P, l, s);
        if (d >= 0) cnt[static_cast<std::size_t>(d)] += 1.0;
      }
      double sum = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        double z = (cnt[k] - static_cast<double>(nr) * row(static_cast<Eigen::Index>(k))) / std::sqrt(double(nr));
        sum += z * z;
      }
      tr[r] = sum;
    });
    double R = static_cast<double>(reps), mean = 0, var = 0;
    for (double v : tr) mean += v / R;
    for (double v : tr) var += (v - mean) * (v - mean) / (R - 1);
    double se = std::sqrt(var / R);
    bool ok = std::abs(mean - target) <= opt.se_band * std::max(se, 1e-12);
    routing_ok = routing_ok && ok;
    routing.push_back({{"node", l + 1}, {"trace", mean}, {"target", target}, {"se", se}, {"ok", ok}});
  }

  nlohmann::json service = {{"slopes", slopes}, {"variance", var_rows}, {"ok", service_ok}};
  res.details = {{"service", service}, {"routing", {{"n", nr}, {"rows", routing}, {"ok", routing_ok}}}};
  res.pass = service_ok && routing_ok;
  return res;
}

}  // namespace tnet
