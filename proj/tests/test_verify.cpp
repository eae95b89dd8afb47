#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace tnet;
using namespace tnet::testing;

TEST(Ks, IdenticalAndDisjointSamples) {
  std::vector<double> a{0.1, 0.5, 0.9, 1.3}, b{5, 6, 7, 8};
  auto same = ks_two_sample(a, a);
  EXPECT_EQ(same.D, 0.0);
  EXPECT_NEAR(same.p_value, 1.0, 1e-12);
  auto far = ks_two_sample(a, b);
  EXPECT_EQ(far.D, 1.0);
  EXPECT_LT(far.p_value, 0.05);
}

TEST(Ks, KolmogorovTailValues) {
  EXPECT_NEAR(kolmogorov_q(0.8276), 0.5, 1e-3);
  EXPECT_NEAR(kolmogorov_q(1.3581), 0.05, 1e-3);
  EXPECT_NEAR(kolmogorov_q(1.6276), 0.01, 1e-3);
  EXPECT_EQ(kolmogorov_q(0.0), 1.0);
}

TEST(Ks, CalibratedUnderTheNull) {
  // Two samples from one law reject at 1% about 1% of the time.
  int reject = 0;
  for (std::uint64_t r = 0; r < 400; ++r) {
    RngStream rng(1, r);
    std::vector<double> a(300), b(300);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    reject += ks_two_sample(a, b).p_value < 0.01;
  }
  EXPECT_LE(reject, 12);
}

TEST(Fslln, UniformArrivalsPassBands) {
  auto res = check_fslln_arrivals(line({1.0}), {100, 1000, 10000}, 50, RngStream(1));
  ASSERT_TRUE(res.slope);
  EXPECT_GE(*res.slope, -0.6);
  EXPECT_LE(*res.slope, -0.4);
  double scaled = res.per_n.back().extra["scaled_median"].get<double>();
  EXPECT_GE(scaled, 0.5);
  EXPECT_LE(scaled, 1.2);
  EXPECT_TRUE(res.pass);
  for (const auto& r : res.per_n)
    for (double s : r.stats) EXPECT_GE(s, 0.0);
}

TEST(Fslln, DeterministicGivenSeed) {
  auto spec = shipped("example2");
  auto a = check_fslln_arrivals(spec, {100, 300, 1000}, 20, RngStream(5)).to_json().dump();
  auto b = check_fslln_arrivals(spec, {100, 300, 1000}, 20, RngStream(5)).to_json().dump();
  EXPECT_EQ(a, b);
}

TEST(Fslln, PointLawIsExact) {
  auto res = check_fslln_arrivals(line({1.0}, ArrivalLaw::point(0.4)), {10, 100, 1000}, 5, RngStream(2));
  for (const auto& r : res.per_n) EXPECT_LE(r.median, 1.0 / r.n);
}

TEST(Fslln, NeedsThreeIncreasingSizes) {
  auto spec = line({1.0});
  EXPECT_THROW(check_fslln_arrivals(spec, {100, 1000}, 5, RngStream(1)), ArgumentError);
  EXPECT_THROW(check_fslln_arrivals(spec, {100, 1000, 500}, 5, RngStream(1)), ArgumentError);
}

TEST(ServiceRouting, PoissonServiceAndSplitRouting) {
  auto spec = line({2.0, 1.0, 1.0});
  spec.P = zero(3);
  spec.P(0, 1) = 0.3;
  spec.P(0, 2) = 0.2;
  auto res = check_service_routing(spec, {100, 1000, 10000}, 200, RngStream(3));
  const auto& var = res.details["service"]["variance"];
  EXPECT_NEAR(var[0]["target"].get<double>(), 2.0, 1e-12);
  EXPECT_TRUE(var[0]["ok"].get<bool>());
  const auto& rows = res.details["routing"]["rows"];
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0]["target"].get<double>(), 0.37, 1e-12);
  EXPECT_TRUE(rows[0]["ok"].get<bool>());
  EXPECT_TRUE(res.pass) << res.to_json().dump(2);
}

TEST(ServiceRouting, DeterministicBaseIsFlaggedDegenerate) {
  auto spec = line({2.0}, ArrivalLaw::uniform(0, 1), 3.0, 1e-3, RenewalBase::Deterministic);
  auto res = check_service_routing(spec, {100, 1000, 10000}, 20, RngStream(4));
  EXPECT_TRUE(res.details["service"]["slopes"][0]["degenerate"].get<bool>());
  // Fluctuation is at most one job: sup |S_n / n - M| <= 1 / n.
  for (const auto& r : res.per_n) EXPECT_LE(r.median, 1.0 / r.n + 1e-12);
}

TEST(FcltQueue, RefusesNearDiscontinuity) {
  auto spec = shipped("tandem_case_ii");
  EXPECT_THROW(check_fclt_queue(spec, 1.25, 1000, 10, RngStream(1)), PreconditionError);
  EXPECT_THROW(check_fclt_queue(spec, 1.252, 1000, 10, RngStream(1)), PreconditionError);
  EXPECT_THROW(check_fclt_queue(spec, 5.0, 1000, 10, RngStream(1)), OutOfRangeError);
}

TEST(FcltQueue, TandemSecondNodePassesAndControlRejects) {
  auto spec = shipped("tandem_case_ii");
  FcltOptions opt;
  opt.nodes = {1};
  auto ok = check_fclt_queue(spec, 1.0, 10000, 300, RngStream(6), opt);
  EXPECT_TRUE(ok.pass) << ok.to_json().dump(2);

  auto wrong = spec;
  wrong.services[1] = ServiceProfile::constant(0.45);
  wrong.anchor_services();
  opt.limit_spec = wrong;
  auto ctl = check_fclt_queue(spec, 1.0, 10000, 300, RngStream(6), opt);
  EXPECT_FALSE(ctl.pass);
}

TEST(FcltQueue, UnderloadedNodeLimitIsDegenerate) {
  auto spec = shipped("single_node");
  auto q = diffusion_queue_pointwise(spec, 0.5, RngStream(7), 100);
  for (const auto& r : q) EXPECT_EQ(r[0], 0.0);
  // The simulated side concentrates at zero as n grows.
  auto res = check_fclt_queue(spec, 0.5, 10000, 100, RngStream(7));
  EXPECT_LT(std::abs(res.per_n[0].extra["nodes"][0]["sim_mean"].get<double>()), 0.1);
}
