#include <gtest/gtest.h>

#include <set>

#include "helpers.hpp"

using namespace tnet;
using namespace tnet::testing;

namespace {

double var_of(const std::vector<double>& v, double* se = nullptr) {
  double n = static_cast<double>(v.size()), m = 0, s2 = 0, m4 = 0;
  for (double x : v) m += x / n;
  for (double x : v) s2 += (x - m) * (x - m) / (n - 1), m4 += std::pow(x - m, 4) / n;
  if (se) *se = std::sqrt(std::max(m4 - s2 * s2, 0.0) / n);
  return s2;
}

std::set<double> disc_times(const TandemPathResult& r, std::size_t node) {
  std::set<double> out;
  for (const auto& d : r.discontinuities)
    if (d.node == node) out.insert(d.t);
  return out;
}

}  // namespace

TEST(DiffusionNetput, TandemSecondNodeHasNoBridgeTerm) {
  auto spec = shipped("tandem_case_ii");
  DiffusionModel m(spec);
  auto s = m.sample_netput(RngStream(1));
  for (std::size_t i = 0; i < s.X.size(); ++i) {
    ASSERT_EQ(s.bridge(1, i), 0.0);
    ASSERT_EQ(s.routing(0, i), 0.0);
    ASSERT_EQ(s.routing(1, i), 0.0);
    ASSERT_NEAR(s.X(1, i), -s.service(1, i), 1e-15);
  }
  // X2 = W1(M1) - W2(M2): its variance at t is M1(t) + M2(t).
  std::vector<double> v;
  for (std::uint64_t r = 0; r < 4000; ++r) v.push_back(m.sample_netput(RngStream(2, r)).X.eval(1, 1.0));
  double se;
  double var = var_of(v, &se);
  EXPECT_NEAR(var, 0.8 + 0.5, 5 * se);
}

TEST(DiffusionNetput, SingleNodeVariance) {
  auto spec = line({2.0}, ArrivalLaw::uniform(0, 1), 1.5, 0.01);
  DiffusionModel m(spec);
  std::vector<double> a, b;
  for (std::uint64_t r = 0; r < 10000; ++r) {
    auto s = m.sample_netput(RngStream(3, r));
    a.push_back(s.X.eval(0, 0.3));
    b.push_back(s.X.eval(0, 1.2));
    ASSERT_EQ(s.bridge(0, spec.horizon.index_of(1.0)), 0.0);
  }
  double se_a, se_b;
  double va = var_of(a, &se_a), vb = var_of(b, &se_b);
  EXPECT_NEAR(va, 0.3 * 0.7 + 0.6, 5 * se_a);
  EXPECT_NEAR(vb, 0.0 + 2.4, 5 * se_b);
  double mean = 0;
  for (double x : a) mean += x / a.size();
  EXPECT_NEAR(mean, 0.0, 5 * std::sqrt(var_of(a) / a.size()));
}

TEST(DiffusionNetput, RoutingTermVarianceUsesFluidDepartures) {
  // Node 1 splits 0.3 / 0.2 / exit; routing into node 2 has variance p (1 - p) Dbar_1(t).
  auto spec = line({2.0, 3.0, 3.0}, ArrivalLaw::uniform(0, 1), 1.5, 0.01);
  spec.P = zero(3);
  spec.P(0, 1) = 0.3;
  spec.P(0, 2) = 0.2;
  DiffusionModel m(spec);
  auto D = fluid_departures(spec, m.fluid());
  std::vector<double> v;
  for (std::uint64_t r = 0; r < 6000; ++r) v.push_back(m.sample_netput(RngStream(4, r)).routing.eval(1, 1.0));
  double se;
  double var = var_of(v, &se);
  EXPECT_NEAR(var, 0.3 * 0.7 * D.eval(0, 1.0), 5 * se);
}

TEST(DiffusionQueue, EqualsNetputBeforeRegulation) {
  auto spec = line({0.5}, ArrivalLaw::uniform(0, 1), 3.0, 0.01);
  DiffusionModel m(spec);
  for (std::uint64_t r = 0; r < 20; ++r) {
    auto s = m.sample(RngStream(5, r));
    for (std::size_t i = 0; i < 200; ++i) ASSERT_NEAR(s.Q(0, i), s.X(0, i), 1e-12);
  }
}

TEST(DiffusionQueue, ZeroInStrictUnderload) {
  auto spec = shipped("single_node");
  auto q = diffusion_queue_pointwise(spec, 0.5, RngStream(6), 50);
  for (const auto& row : q) EXPECT_NEAR(row[0], 0.0, 1e-12);
}

TEST(DiffusionQueue, ReflectedGaussianAtEmptyingTime) {
  auto spec = line({0.5}, ArrivalLaw::uniform(0, 1), 3.0, 0.01);
  DiffusionModel m(spec);
  std::size_t i = spec.horizon.index_of(2.0);
  for (std::uint64_t r = 0; r < 50; ++r) {
    auto s = m.sample(RngStream(7, r));
    double x = s.X(0, i);
    ASSERT_NEAR(s.Q(0, i), x + std::max(0.0, -x), 1e-12);
  }
}

TEST(DiffusionQueue, DeterministicPerSubstream) {
  auto spec = shipped("tandem_case_i");
  auto a = diffusion_queue_pointwise(spec, 1.7, RngStream(8), 10);
  auto b = diffusion_queue_pointwise(spec, 1.7, RngStream(8), 10);
  EXPECT_EQ(a, b);
}

TEST(Workload, UnitRatesLeaveQueueUnchanged) {
  auto spec = line({1.0, 1.0});
  DiffusionModel m(spec);
  auto s = m.sample(RngStream(9));
  EXPECT_EQ(diffusion_workload(s, spec).raw(), s.Q.raw());
}

TEST(Workload, RejectsVaryingRates) {
  auto spec = line({1.0});
  spec.services[0] = ServiceProfile::piecewise({{0, 0.5}, {1, 2.0}});
  spec.anchor_services();
  DiffusionModel m(spec);
  auto s = m.sample(RngStream(10));
  EXPECT_TRUE(s.Z.raw().empty());
  EXPECT_THROW(diffusion_workload(s, spec), NotSupportedError);
}

TEST(Workload, FastUpstreamLeavesOnlyTheLastNode) {
  auto spec = shipped("example1_fast");
  DiffusionModel m(spec);
  for (std::uint64_t r = 0; r < 10; ++r) {
    auto s = m.sample(RngStream(11, r));
    for (std::size_t i = 1; i < s.Z.size(); ++i) {
      ASSERT_NEAR(s.Z(0, i), 0.0, 1e-12);
      ASSERT_NEAR(s.Z(1, i), 0.0, 1e-12);
    }
    EXPECT_GT(std::abs(s.Z(2, spec.horizon.index_of(1.0))), 0.0);
  }
}

TEST(TandemPhases, CaseTwo) {
  TandemDiffusion td(shipped("tandem_case_ii"));
  EXPECT_EQ(td.tandem_case(), TandemCase::FirstFaster);
  const auto& p1 = td.phases(0);
  ASSERT_GE(p1.size(), 2u);
  EXPECT_EQ(p1[0].kind, FluidPhase::Kind::Over);
  EXPECT_NEAR(p1[0].b, 1.25, 1e-9);
  const auto& p2 = td.phases(1);
  EXPECT_EQ(p2[0].kind, FluidPhase::Kind::Over);
  EXPECT_NEAR(p2[0].b, 2.0, 1e-9);
  EXPECT_NEAR(*td.tau1(), 1.25, 1e-9);
}

TEST(TandemPhases, CaseThreeSecondNodeCritical) {
  TandemDiffusion td(shipped("tandem_case_iii"));
  EXPECT_EQ(td.tandem_case(), TandemCase::Equal);
  const auto& p2 = td.phases(1);
  EXPECT_EQ(p2[0].kind, FluidPhase::Kind::Crit);
  EXPECT_NEAR(p2[0].b, 1.25, 1e-9);
  EXPECT_EQ(p2[1].kind, FluidPhase::Kind::Under);
}

TEST(TandemPhases, RejectsOtherTopologies) {
  EXPECT_THROW(TandemDiffusion(line({1, 1, 1})), ArgumentError);
  auto s = line({1, 1});
  s.P = mat2(0, 0, 1, 0);
  EXPECT_THROW(TandemDiffusion{s}, ArgumentError);
}

TEST(TandemPath, CaseOneDiscontinuitiesAreDisjoint) {
  TandemDiffusion td(shipped("tandem_case_i"));
  for (std::uint64_t r = 0; r < 20; ++r) {
    auto res = td.sample(RngStream(12, r));
    auto d1 = disc_times(res, 0), d2 = disc_times(res, 1);
    for (double t : d1) EXPECT_FALSE(d2.count(t)) << t;
    EXPECT_TRUE(d2.empty());
  }
}

TEST(TandemPath, CaseThreeSharedDiscontinuity) {
  TandemDiffusion td(shipped("tandem_case_iii"));
  double tau = *td.tau1();
  EXPECT_NEAR(tau, 1.25, 1e-9);
  for (std::uint64_t r = 0; r < 20; ++r) {
    auto res = td.sample(RngStream(13, r));
    EXPECT_EQ(disc_times(res, 0), std::set<double>{tau});
    // node 2 jumps unless its reflected path happens to sit at 0 at tau
    double left = td.queue(res.sample.X, 1, tau, Side::Left);
    EXPECT_EQ(disc_times(res, 1), left > 1e-9 ? std::set<double>{tau} : std::set<double>{}) << r;
  }
}

TEST(TandemPath, TypeFollowsSignAtTau) {
  for (const char* n : {"tandem_case_i", "tandem_case_ii", "tandem_case_iii"}) {
    TandemDiffusion td(shipped(n));
    double tau = *td.tau1();
    for (std::uint64_t r = 0; r < 20; ++r) {
      auto res = td.sample(RngStream(14, r));
      double x = res.sample.X.eval(0, tau);
      for (const auto& d : res.discontinuities)
        if (d.node == 0 && d.t == tau) { EXPECT_EQ(d.type, x >= 0 ? "right" : "left") << n; }
    }
  }
}

TEST(TandemPath, ClosedFormMatchesGenericRegulator) {
  for (const char* n : {"tandem_case_i", "tandem_case_ii", "tandem_case_iii"}) {
    TandemDiffusion td(shipped(n));
    const auto& g = td.model().spec().horizon;
    std::vector<double> b = td.boundaries(0), b2 = td.boundaries(1);
    b.insert(b.end(), b2.begin(), b2.end());
    for (std::uint64_t r = 0; r < 5; ++r) {
      auto res = td.sample(RngStream(15, r));
      auto generic = td.model().regulator().apply(res.sample.X).value;
      int probes = 0;
      for (std::size_t i = 7; i < g.size() && probes < 20; i += 149) {
        double t = g.time(i);
        bool near = false;
        for (double c : b) near = near || std::abs(c - t) < 3 * g.h();
        if (near) continue;
        ++probes;
        for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(res.sample.Q(k, i), generic(k, i), 1e-6) << n << ' ' << t;
      }
      EXPECT_EQ(probes, 20);
    }
  }
}

TEST(DiscontinuityType, FromOneSidedLimits) {
  EXPECT_EQ(discontinuity_type(1.0, 1.0, 0.0, 1e-9), "right");
  EXPECT_EQ(discontinuity_type(1.0, 0.0, 0.0, 1e-9), "left");
  EXPECT_EQ(discontinuity_type(1.0, 0.0, 2.0, 1e-9), "separated");
  EXPECT_EQ(discontinuity_type(1.0, 1.0, 1.0, 1e-9), "none");
}
