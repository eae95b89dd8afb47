#pragma once

// Discrete-event simulation of the pre-limit network: FIFO single servers,
// renewal service driven by a per-node work clock, Markov routing.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <ostream>
#include <queue>
#include <string>
#include <tuple>
#include <vector>

#include "tnet/network.hpp"
#include "tnet/paths.hpp"
#include "tnet/rng.hpp"
#include "tnet/stochastic.hpp"

namespace tnet {

enum class EventKind { Arrive, Depart, Exit };

struct SimEvent {
  double time;
  std::size_t node;
  EventKind kind;
  std::uint64_t job;
  int route = -1;  ///< for departures: destination node, -1 = exit
};

struct NodeLog {
  std::vector<double> exogenous;            ///< exogenous arrival times
  std::vector<double> inflow;               ///< all arrival times (exogenous + routed)
  std::vector<std::uint64_t> inflow_jobs;
  std::vector<double> departures;
  std::vector<std::uint64_t> depart_jobs;
  std::vector<int> depart_route;
  std::vector<std::pair<double, double>> busy;  ///< maximal busy periods [start, end)
};

struct Trajectory {
  std::size_t n = 0;
  std::size_t K = 0;
  TimeGrid grid;
  std::vector<SimEvent> events;
  std::vector<NodeLog> nodes;
  VectorPath A, E, D, Q, B, I;  ///< exogenous, total inflow, departures, queue, busy, idle
  std::size_t exogenous_total = 0;
  std::size_t exits = 0;
  std::size_t in_system_at_end = 0;
  double end_time = 0.0;
  bool truncated = false;
  std::string warning;
};

struct SimOptions {
  double cutoff_factor = 3.0;  ///< simulate until t1 + cutoff_factor (t1 - t0)
  bool keep_event_log = true;
};

namespace detail {

inline VectorPath count_paths(const TimeGrid& g, const std::vector<const std::vector<double>*>& lists) {
  VectorPath p(g, lists.size(), Interpolation::Step);
  for (std::size_t k = 0; k < lists.size(); ++k) {
    const auto& v = *lists[k];
    std::size_t c = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      double t = g.time(i);
      while (c < v.size() && v[c] <= t) ++c;
      p(k, i) = static_cast<double>(c);
    }
  }
  return p;
}

}  // namespace detail

/// One replication with population n. Randomness: arrivals on substream 1,
/// service of node k on 100 + k, routing out of node k on 10000 + k.
inline Trajectory simulate(const NetworkSpec& spec, std::size_t n, const RngStream& rng,
                           const SimOptions& opt = {}) {
  const std::size_t K = spec.K;
  const double t0 = spec.horizon.t0(), t1 = spec.horizon.t1();
  const double cutoff = t1 + opt.cutoff_factor * (t1 - t0);
  const double dn = static_cast<double>(n);

  Trajectory tr;
  tr.n = n;
  tr.K = K;
  tr.grid = spec.horizon;
  tr.nodes.resize(K);

  RngStream arr_rng = rng.substream(1);
  std::vector<RngStream> svc_rng, route_rng;
  for (std::size_t k = 0; k < K; ++k) {
    svc_rng.push_back(rng.substream(100 + k));
    route_rng.push_back(rng.substream(10000 + k));
  }

  // (time, kind, node, job): departures (0) before arrivals (1) at equal times.
  using Key = std::tuple<double, int, std::size_t, std::uint64_t>;
  std::priority_queue<Key, std::vector<Key>, std::greater<Key>> pq;

  auto epochs = sample_arrival_epochs(spec, n, arr_rng);
  for (std::size_t j = 0; j < spec.J(); ++j)
    for (std::size_t m = 0; m < n; ++m)
      pq.emplace(epochs[j][m], 1, spec.entry_nodes[j], static_cast<std::uint64_t>(j * n + m));
  tr.exogenous_total = spec.J() * n;

  struct Server {
    std::deque<std::uint64_t> queue;  // front is in service
    double work = 0.0;                // n * integral of mu over busy wall time
    double next_epoch = 0.0;          // next renewal epoch in work units
    double busy_since = 0.0;
  };
  std::vector<Server> sv(K);
  for (std::size_t k = 0; k < K; ++k)
    sv[k].next_epoch = renewal_increment(spec.services[k].base(), spec.services[k].scv(), svc_rng[k]);

  auto schedule_completion = [&](std::size_t k, double now) {
    const auto& prof = spec.services[k];
    double target = prof.cumulative_unchecked(now) + (sv[k].next_epoch - sv[k].work) / dn;
    double c = prof.inverse_cumulative(target);
    if (std::isfinite(c)) pq.emplace(std::max(c, now), 0, k, sv[k].queue.front());
  };

  auto log = [&](double t, std::size_t k, EventKind kind, std::uint64_t job, int route = -1) {
    if (opt.keep_event_log) tr.events.push_back({t, k, kind, job, route});
  };

  double now = t0;
  while (!pq.empty()) {
    auto [t, kind, k, job] = pq.top();
    if (t > cutoff) break;
    pq.pop();
    now = t;
    auto& s = sv[k];
    auto& nl = tr.nodes[k];
    if (kind == 1) {
      nl.inflow.push_back(t);
      nl.inflow_jobs.push_back(job);
      log(t, k, EventKind::Arrive, job);
      s.queue.push_back(job);
      if (s.queue.size() == 1) {
        s.busy_since = t;
        schedule_completion(k, t);
      }
    } else {
      s.work = s.next_epoch;
      s.next_epoch += renewal_increment(spec.services[k].base(), spec.services[k].scv(), svc_rng[k]);
      std::uint64_t done = s.queue.front();
      s.queue.pop_front();
      int dest = draw_route(spec.P, k, route_rng[k]);
      nl.departures.push_back(t);
      nl.depart_jobs.push_back(done);
      nl.depart_route.push_back(dest);
      log(t, k, EventKind::Depart, done, dest);
      if (dest < 0) {
        ++tr.exits;
        log(t, k, EventKind::Exit, done);
      } else {
        pq.emplace(t, 1, static_cast<std::size_t>(dest), done);
      }
      if (s.queue.empty()) {
        nl.busy.emplace_back(s.busy_since, t);
      } else {
        schedule_completion(k, t);
      }
    }
  }
  tr.end_time = now;
  for (std::size_t k = 0; k < K; ++k) {
    if (!sv[k].queue.empty()) tr.nodes[k].busy.emplace_back(sv[k].busy_since, std::numeric_limits<double>::infinity());
  }
  tr.in_system_at_end = tr.exogenous_total - tr.exits;
  if (tr.in_system_at_end > 0) {
    tr.truncated = true;
    tr.warning = "cutoff t = " + std::to_string(cutoff) + " reached with " + std::to_string(tr.in_system_at_end) +
                 " jobs in the network";
  }

  // Exogenous arrival times per node.
  for (std::size_t j = 0; j < spec.J(); ++j) tr.nodes[spec.entry_nodes[j]].exogenous = epochs[j];
  for (auto& nl : tr.nodes) std::sort(nl.exogenous.begin(), nl.exogenous.end());

  std::vector<const std::vector<double>*> ex, in, dep;
  for (const auto& nl : tr.nodes) {
    ex.push_back(&nl.exogenous);
    in.push_back(&nl.inflow);
    dep.push_back(&nl.departures);
  }
  const auto& g = spec.horizon;
  tr.A = detail::count_paths(g, ex);
  tr.E = detail::count_paths(g, in);
  tr.D = detail::count_paths(g, dep);
  tr.Q = VectorPath(g, K, Interpolation::Step);
  tr.B = VectorPath(g, K, Interpolation::Linear);
  tr.I = VectorPath(g, K, Interpolation::Linear);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& busy = tr.nodes[k].busy;
    std::size_t b = 0;
    double closed = 0.0;  // busy time of periods ending before the current grid time
    for (std::size_t i = 0; i < g.size(); ++i) {
      double t = g.time(i);
      tr.Q(k, i) = tr.E(k, i) - tr.D(k, i);
      while (b < busy.size() && busy[b].second <= t) {
        closed += busy[b].second - busy[b].first;
        ++b;
      }
      double open = (b < busy.size() && busy[b].first < t) ? t - busy[b].first : 0.0;
      tr.B(k, i) = closed + open;
      tr.I(k, i) = (t - t0) - tr.B(k, i);
    }
  }
  return tr;
}

struct ScaledPaths {
  VectorPath Q, E, D, A;  ///< divided by n
  VectorPath B, I;        ///< busy / idle time are not rescaled
};

inline ScaledPaths fluid_scale_all(const Trajectory& tr) {
  auto scale = [&](const VectorPath& p) {
    VectorPath out = p;
    double inv = 1.0 / static_cast<double>(tr.n);
    for (std::size_t k = 0; k < p.dim(); ++k)
      for (std::size_t i = 0; i < p.size(); ++i) out(k, i) = p(k, i) * inv;
    return out;
  };
  return {scale(tr.Q), scale(tr.E), scale(tr.D), scale(tr.A), tr.B, tr.I};
}

/// n^{-1} Q_n.
inline VectorPath fluid_scale(const Trajectory& tr) { return fluid_scale_all(tr).Q; }

/// sqrt(n) (n^{-1} Q_n - Qbar).
inline VectorPath diffusion_scale(const Trajectory& tr, const VectorPath& fluid_ref) {
  if (!(tr.Q.grid() == fluid_ref.grid()) || tr.Q.dim() != fluid_ref.dim())
    throw ArgumentError("diffusion_scale: fluid reference grid or dimension mismatch");
  double dn = static_cast<double>(tr.n), rn = std::sqrt(dn);
  VectorPath out(tr.Q.grid(), tr.Q.dim(), Interpolation::Step);
  for (std::size_t k = 0; k < out.dim(); ++k)
    for (std::size_t i = 0; i < out.size(); ++i) out(k, i) = rn * (tr.Q(k, i) / dn - fluid_ref(k, i));
  return out;
}

/// sqrt(n) (n^{-1} Q_n(t) - Qbar(t)) at a single time.
inline std::vector<double> diffusion_scale_at(const Trajectory& tr, const VectorPath& fluid_ref, double t) {
  double dn = static_cast<double>(tr.n), rn = std::sqrt(dn);
  std::vector<double> out(tr.K);
  for (std::size_t k = 0; k < tr.K; ++k) out[k] = rn * (tr.Q.eval(k, t) / dn - fluid_ref.eval(k, t));
  return out;
}

inline void write_event_log_csv(std::ostream& os, const Trajectory& tr) {
  os << "time,node,event,job_id\n";
  char buf[64];
  for (const auto& e : tr.events) {
    std::snprintf(buf, sizeof buf, "%.12g", e.time);
    const char* kind = e.kind == EventKind::Arrive ? "arrive" : e.kind == EventKind::Depart ? "depart" : "exit";
    os << buf << ',' << e.node + 1 << ',' << kind << ',' << e.job << '\n';
  }
}

// ---------------------------------------------------------------- conservation

struct ConservationReport {
  bool flow = true;
  bool job = true;
  bool work = true;
  bool fifo = true;
  std::vector<std::string> issues;
  bool ok() const { return flow && job && work && fifo; }
};

/// Exact checks on the event lists of a trajectory.
inline ConservationReport check_conservation(const Trajectory& tr) {
  ConservationReport r;
  const std::size_t K = tr.K;
  // Flow: inflow at k = exogenous arrivals at k merged with departures routed to k, same instants.
  std::vector<std::vector<double>> routed_in(K);
  for (std::size_t l = 0; l < K; ++l) {
    const auto& nl = tr.nodes[l];
    for (std::size_t d = 0; d < nl.departures.size(); ++d)
      if (nl.depart_route[d] >= 0) routed_in[static_cast<std::size_t>(nl.depart_route[d])].push_back(nl.departures[d]);
  }
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> expect = tr.nodes[k].exogenous;
    expect.insert(expect.end(), routed_in[k].begin(), routed_in[k].end());
    std::sort(expect.begin(), expect.end());
    std::vector<double> got = tr.nodes[k].inflow;
    std::sort(got.begin(), got.end());
    // Exogenous arrivals after the cutoff are excluded by construction; compare up to the end time.
    auto trim = [&](std::vector<double>& v) {
      v.erase(std::upper_bound(v.begin(), v.end(), tr.end_time), v.end());
    };
    trim(expect);
    trim(got);
    if (expect != got) {
      r.flow = false;
      r.issues.push_back("flow conservation fails at node " + std::to_string(k + 1));
    }
  }
  // Job: exogenous = exits + in system.
  std::size_t in_queue = 0;
  for (const auto& nl : tr.nodes) in_queue += nl.inflow.size() - nl.departures.size();
  if (tr.exogenous_total != tr.exits + tr.in_system_at_end || in_queue != tr.in_system_at_end) {
    r.job = false;
    r.issues.push_back("job conservation fails: exogenous " + std::to_string(tr.exogenous_total) + ", exits " +
                       std::to_string(tr.exits) + ", in system " + std::to_string(in_queue));
  }
  // Work: busy periods are exactly the maximal periods with a non-empty queue.
  for (std::size_t k = 0; k < K; ++k) {
    const auto& nl = tr.nodes[k];
    std::vector<std::pair<double, int>> ev;
    for (double t : nl.inflow) ev.emplace_back(t, +1);
    for (double t : nl.departures) ev.emplace_back(t, -1);
    // departures first at ties, matching the simulator's ordering
    std::stable_sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
      return a.first < b.first || (a.first == b.first && a.second < b.second);
    });
    std::vector<std::pair<double, double>> periods;
    long q = 0;
    double start = 0.0;
    for (const auto& [t, d] : ev) {
      if (q == 0 && d > 0) start = t;
      q += d;
      if (q < 0) {
        r.work = false;
        r.issues.push_back("negative queue at node " + std::to_string(k + 1));
        break;
      }
      if (q == 0 && d < 0) periods.emplace_back(start, t);
    }
    if (q > 0) periods.emplace_back(start, std::numeric_limits<double>::infinity());
    // Periods that close and reopen at the same instant form one busy period.
    std::vector<std::pair<double, double>> merged;
    for (const auto& p : periods) {
      if (!merged.empty() && merged.back().second == p.first) merged.back().second = p.second;
      else merged.push_back(p);
    }
    std::vector<std::pair<double, double>> busy;
    for (const auto& p : nl.busy) {
      if (!busy.empty() && busy.back().second == p.first) busy.back().second = p.second;
      else busy.push_back(p);
    }
    if (merged != busy) {
      r.work = false;
      r.issues.push_back("server idles with a non-empty queue at node " + std::to_string(k + 1));
    }
  }
  // FIFO: departure order is a prefix of arrival order.
  for (std::size_t k = 0; k < K; ++k) {
    const auto& nl = tr.nodes[k];
    if (!std::equal(nl.depart_jobs.begin(), nl.depart_jobs.end(), nl.inflow_jobs.begin())) {
      r.fifo = false;
      r.issues.push_back("FIFO order violated at node " + std::to_string(k + 1));
    }
  }
  return r;
}

}  // namespace tnet
