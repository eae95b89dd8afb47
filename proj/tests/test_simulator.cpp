#include <gtest/gtest.h>

#include <sstream>

#include "helpers.hpp"

using namespace tnet;
using namespace tnet::testing;

TEST(Simulate, OneJobDeterministicService) {
  auto spec = line({1.0}, ArrivalLaw::point(0.3), 2.0, 0.01, RenewalBase::Deterministic);
  auto tr = simulate(spec, 1, RngStream(1));
  ASSERT_EQ(tr.nodes[0].departures.size(), 1u);
  EXPECT_NEAR(tr.nodes[0].departures[0], 1.3, 1e-12);
  for (std::size_t i = 0; i < tr.grid.size(); ++i) {
    double t = tr.grid.time(i);
    double expect = (t >= 0.3 - 1e-9 && t < 1.3 - 1e-9) ? 1.0 : 0.0;
    EXPECT_EQ(tr.Q(0, i), expect) << t;
  }
  EXPECT_TRUE(check_conservation(tr).ok());
}

TEST(Simulate, OneJobThroughDeterministicTandem) {
  auto spec = line({1.0, 1.0}, ArrivalLaw::point(0.0), 3.0, 0.01, RenewalBase::Deterministic);
  auto tr = simulate(spec, 1, RngStream(1));
  ASSERT_EQ(tr.nodes[1].departures.size(), 1u);
  EXPECT_NEAR(tr.nodes[1].departures[0], 2.0, 1e-12);
  EXPECT_EQ(tr.exits, 1u);
}

TEST(Simulate, TandemRampAtLargeN) {
  auto spec = line({1.0, 0.5});
  auto tr = simulate(spec, 100000, RngStream(3));
  auto q = fluid_scale(tr);
  auto fl = fluid_solve(spec);
  double ramp = 0.0;
  for (std::size_t i = 0; i <= spec.horizon.index_of(1.0); ++i)
    ramp = std::max(ramp, std::abs(q(1, i) - 0.5 * spec.horizon.time(i)));
  EXPECT_LT(ramp, 0.02);
  EXPECT_LT(sup_distance(q, fl.Q), 0.02);
  EXPECT_TRUE(check_conservation(tr).ok());
}

TEST(Simulate, SameSeedSameTrajectory) {
  auto spec = shipped("example2");
  auto a = simulate(spec, 2000, RngStream(5)), b = simulate(spec, 2000, RngStream(5));
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t e = 0; e < a.events.size(); ++e) {
    EXPECT_EQ(a.events[e].time, b.events[e].time);
    EXPECT_EQ(a.events[e].job, b.events[e].job);
  }
  EXPECT_EQ(a.Q.raw(), b.Q.raw());
}

TEST(Simulate, ConservationOnFeedbackNetwork) {
  auto spec = line({1.5, 1.2, 2.0});
  spec.P = zero(3);
  spec.P(0, 1) = 0.6;
  spec.P(0, 2) = 0.3;
  spec.P(1, 0) = 0.2;
  spec.P(2, 2) = 0.1;
  spec.entry_nodes = {0, 2};
  spec.arrivals = {ArrivalLaw::uniform(0, 1), ArrivalLaw::triangular(0.5, 1.5)};
  ASSERT_TRUE(validate_spec(spec).ok);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto tr = simulate(spec, 3000, RngStream(seed));
    auto rep = check_conservation(tr);
    EXPECT_TRUE(rep.ok()) << rep.issues.front();
    EXPECT_FALSE(tr.truncated);
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t i = 0; i < tr.grid.size(); ++i) {
        ASSERT_GE(tr.Q(k, i), 0.0);
        EXPECT_NEAR(tr.B(k, i) + tr.I(k, i), tr.grid.time(i), 1e-9);
      }
  }
}

TEST(Simulate, ConservationWithDeterministicTies) {
  // Deterministic service and point arrivals create many equal event times.
  auto spec = line({2.0, 2.0}, ArrivalLaw::point(0.5), 3.0, 0.01, RenewalBase::Deterministic);
  auto tr = simulate(spec, 50, RngStream(1));
  auto rep = check_conservation(tr);
  EXPECT_TRUE(rep.ok()) << (rep.issues.empty() ? "" : rep.issues.front());
}

TEST(Simulate, CutoffRecordsTruncation) {
  auto spec = line({0.01}, ArrivalLaw::uniform(0, 1), 2.0, 0.01);
  SimOptions opt;
  opt.cutoff_factor = 0.5;
  auto tr = simulate(spec, 1000, RngStream(1), opt);
  EXPECT_TRUE(tr.truncated);
  EXPECT_FALSE(tr.warning.empty());
  EXPECT_EQ(tr.exogenous_total, tr.exits + tr.in_system_at_end);
  EXPECT_TRUE(check_conservation(tr).ok());
}

TEST(FluidScale, UnitPopulationIsIdentity) {
  auto spec = line({1.0});
  auto tr = simulate(spec, 1, RngStream(2));
  EXPECT_EQ(fluid_scale(tr).raw(), tr.Q.raw());
}

TEST(FluidScale, LinearInPopulation) {
  auto spec = line({1.0});
  auto tr = simulate(spec, 10, RngStream(2));
  auto a = fluid_scale(tr);
  tr.n = 20;
  auto b = fluid_scale(tr);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(b(0, i), 0.5 * a(0, i));
}

TEST(DiffusionScale, ExactFluidGivesZero) {
  auto spec = line({1.0});
  auto tr = simulate(spec, 100, RngStream(2));
  auto ref = fluid_scale(tr);
  EXPECT_EQ(sup_norm(diffusion_scale(tr, ref)), 0.0);
  EXPECT_THROW(diffusion_scale(tr, VectorPath(TimeGrid(0, 1, 0.1), 1)), ArgumentError);
}

TEST(DiffusionScale, CentredBeforeEmptying) {
  auto spec = line({0.5}, ArrivalLaw::uniform(0, 1), 3.0, 0.01);
  auto fl = fluid_solve(spec);
  std::vector<double> v(1000);
  parallel_for(v.size(), [&](std::size_t r) {
    SimOptions o;
    o.keep_event_log = false;
    v[r] = diffusion_scale_at(simulate(spec, 10000, RngStream(7, r), o), fl.Q, 1.0)[0];
  });
  double m = 0, s2 = 0;
  for (double x : v) m += x / 1000;
  for (double x : v) s2 += (x - m) * (x - m) / 999;
  EXPECT_NEAR(m, 0.0, 5 * std::sqrt(s2 / 1000));
}

TEST(DiffusionScale, VanishesInStrictUnderload) {
  auto spec = shipped("single_node");
  auto fl = fluid_solve(spec);
  double mean_abs = 0;
  for (std::uint64_t r = 0; r < 100; ++r)
    mean_abs += std::abs(diffusion_scale_at(simulate(spec, 10000, RngStream(8, r)), fl.Q, 0.7)[0]) / 100;
  EXPECT_LT(mean_abs, 0.1);
}

TEST(EventLog, CsvColumns) {
  auto spec = line({1.0, 1.0}, ArrivalLaw::point(0.0), 3.0, 0.01, RenewalBase::Deterministic);
  auto tr = simulate(spec, 1, RngStream(1));
  std::ostringstream os;
  write_event_log_csv(os, tr);
  EXPECT_EQ(os.str(), "time,node,event,job_id\n0,1,arrive,0\n1,1,depart,0\n1,2,arrive,0\n2,2,depart,0\n2,2,exit,0\n");
}
