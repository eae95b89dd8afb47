#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace tnet;
using namespace tnet::testing;

TEST(FluidNetput, SingleNode) {
  auto spec = line({0.5});
  auto X = fluid_netput(spec);
  for (std::size_t i = 0; i < X.size(); ++i) {
    double t = X.grid().time(i);
    EXPECT_NEAR(X(0, i), std::min(t, 1.0) - 0.5 * t, 1e-12);
  }
}

TEST(FluidNetput, TandemForm) {
  auto spec = line({0.8, 0.5});
  auto X = fluid_netput(spec);
  for (std::size_t i = 0; i < X.size(); ++i) {
    double t = X.grid().time(i);
    EXPECT_NEAR(X(0, i), std::min(t, 1.0) - 0.8 * t, 1e-12);
    EXPECT_NEAR(X(1, i), 0.3 * t, 1e-12);
  }
}

TEST(FluidNetput, NoServiceLeavesArrivals) {
  auto spec = line({0.0, 0.0}, ArrivalLaw::triangular(0, 1));
  auto X = fluid_netput(spec);
  for (std::size_t i = 0; i < X.size(); ++i) {
    EXPECT_NEAR(X(0, i), spec.arrivals[0].cdf(X.grid().time(i)), 1e-15);
    EXPECT_EQ(X(1, i), 0.0);
  }
}

TEST(FluidSolve, SingleNodeEmptiesAtTwo) {
  auto spec = line({0.5});
  auto s = fluid_solve(spec);
  for (std::size_t i = 0; i < s.Q.size(); ++i) {
    double t = s.Q.grid().time(i);
    double expect = t <= 2.0 ? std::min(t, 1.0) - 0.5 * t : 0.0;
    EXPECT_NEAR(s.Q(0, i), expect, 1e-12) << t;
  }
  auto c = crossing_times(spec, &s);
  ASSERT_TRUE(c[0].tau1);
  EXPECT_NEAR(*c[0].tau1, 2.0, 1e-9);
  ASSERT_EQ(c[0].emptying.size(), 1u);
  EXPECT_NEAR(c[0].emptying[0], 2.0, 2e-3);
}

// With mu_1 = 1 the first queue stays empty and the last one builds at
// (1 - mu_K) t only while arrivals last; it drains at mu_K afterwards.
TEST(FluidSolve, ExampleOneRampThenDrain) {
  auto spec = shipped("example1");
  auto s = fluid_solve(spec);
  for (std::size_t i = 0; i < s.Q.size(); ++i) {
    double t = s.Q.grid().time(i);
    EXPECT_NEAR(s.Q(0, i), 0.0, 1e-12);
    EXPECT_NEAR(s.Q(1, i), 0.0, 1e-12);
    double expect = t <= 1.0 ? 0.5 * t : std::max(0.0, 0.5 - 0.5 * (t - 1.0));
    EXPECT_NEAR(s.Q(2, i), expect, 1e-9) << t;
  }
  EXPECT_TRUE(s.workload_supported);
  EXPECT_NEAR(s.Z(2, 500), s.Q(2, 500) / 0.5, 1e-15);
}

TEST(FluidSolve, ParallelNodesRegulateCoordinatewise) {
  auto spec = line({0.7, 1.4});
  spec.P = zero(2);
  spec.entry_nodes = {0, 1};
  spec.arrivals = {ArrivalLaw::uniform(0, 1), ArrivalLaw::triangular(0, 2)};
  auto s = fluid_solve(spec);
  auto supneg = path_running_sup_plus([&] {
    VectorPath m = s.X;
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t i = 0; i < m.size(); ++i) m(k, i) = -m(k, i);
    return m;
  }());
  EXPECT_LT(sup_distance(s.Y, supneg), 1e-12);
}

TEST(FluidSolve, MatchesTandemClosedForm) {
  for (const char* n : {"tandem_case_i", "tandem_case_ii", "tandem_case_iii"}) {
    auto spec = shipped(n);
    auto s = fluid_solve(spec);
    EXPECT_LT(sup_distance(s.Q, tandem_closed_form(s.X, spec.P).z), 1e-8) << n;
  }
}

TEST(FluidSolve, MassBalanceAndSign) {
  for (const char* n : {"example1", "example2", "example2_fast", "tandem_case_ii"}) {
    auto spec = shipped(n);
    auto s = fluid_solve(spec);
    EXPECT_LT(fluid_mass_balance_error(spec, s), 1e-9) << n;
    for (double v : s.Q.raw()) EXPECT_GE(v, -s.tol_c);
  }
}

TEST(FluidSolve, BusyTimeFormsAgreeOnTandemWithUnitRates) {
  // Both forms give t - Psi_k / mu_k only when mu = 1 and P has no feedback
  // into a regulated node; here node 1 never idles before node 2 does.
  auto spec = line({1.0, 1.0}, ArrivalLaw::uniform(0, 1));
  auto a = fluid_solve(spec, BusyTimeForm::RateScaled);
  auto b = fluid_solve(spec, BusyTimeForm::Corollary);
  for (std::size_t i = 0; i < a.B.size(); ++i) EXPECT_NEAR(a.B(0, i), b.B(0, i), 1e-9);
}

TEST(FluidSolve, RateScaledBusyTimeMatchesSimulation) {
  auto spec = line({0.5}, ArrivalLaw::uniform(0, 1));
  auto s = fluid_solve(spec);
  auto tr = simulate(spec, 50000, RngStream(4));
  for (std::size_t i = 0; i < s.B.size(); i += 100) EXPECT_NEAR(tr.B(0, i), s.B(0, i), 0.02);
}

TEST(FluidSolve, WorkloadFlaggedForVaryingRates) {
  auto spec = line({1.0});
  spec.services[0] = ServiceProfile::piecewise({{0, 0.5}, {1, 2.0}});
  spec.anchor_services();
  auto s = fluid_solve(spec);
  EXPECT_FALSE(s.workload_supported);
}

TEST(Crossings, UniformSlowNode) {
  auto c = crossing_times(line({0.5}));
  EXPECT_NEAR(*c[0].tau1, 2.0, 1e-9);
}

TEST(Crossings, TriangularDensityCrossings) {
  auto spec = shipped("example2");
  auto c = crossing_times(spec);
  ASSERT_TRUE(c[0].tau1p && c[0].tau2p);
  EXPECT_NEAR(*c[0].tau1p, 0.375, 1e-9);
  EXPECT_NEAR(*c[0].tau2p, 0.625, 1e-9);
  ASSERT_TRUE(c[2].tau1p && c[2].tau2p);
  EXPECT_NEAR(*c[2].tau1p, 0.2, 1e-9);
  EXPECT_NEAR(*c[2].tau2p, 0.8, 1e-9);
}

TEST(Crossings, JsonUsesNullForAbsent) {
  auto j = crossing_times_json(crossing_times(line({2.0})));
  EXPECT_TRUE(j[0]["tau2"].is_null());
  EXPECT_TRUE(j[0]["tau1p"].is_null());
}
