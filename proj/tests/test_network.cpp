#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace tnet;
using namespace tnet::testing;

namespace {

NetworkSpec two_node(const Eigen::MatrixXd& P) {
  auto s = line({1.0, 1.0});
  s.P = P;
  return s;
}

}  // namespace

TEST(Validate, PrintedTandemMatrixIsNilpotent) {
  auto r = validate_spec(two_node(mat2(0, 0, 1, 0)));
  EXPECT_TRUE(r.ok) << r.summary();
  EXPECT_EQ(r.spectral_radius, 0.0);
}

TEST(Validate, PermutationIsRejected) {
  auto r = validate_spec(two_node(mat2(0, 1, 1, 0)));
  EXPECT_FALSE(r.ok);
  EXPECT_NEAR(r.spectral_radius, 1.0, 1e-9);
}

TEST(Validate, DiagonalHalf) {
  auto r = validate_spec(two_node(mat2(0.5, 0, 0, 0.5)));
  EXPECT_TRUE(r.ok);
  EXPECT_NEAR(r.spectral_radius, 0.5, 1e-9);
}

TEST(Validate, ThreeNodeChainHasRadiusZero) {
  EXPECT_EQ(spectral_radius(line({1, 1, 1}).P), 0.0);
}

TEST(Validate, RadiusMatchesEigenvaluesOnRandomMatrices) {
  RngStream rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::MatrixXd P(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) P(i, j) = 0.3 * rng.uniform();
    double exact = P.eigenvalues().cwiseAbs().maxCoeff();
    EXPECT_NEAR(spectral_radius(P), exact, 1e-6);
  }
}

TEST(Validate, ReportsEveryProblem) {
  auto s = line({1.0, -1.0});
  s.arrivals = {ArrivalLaw::uniform(0, 5)};
  s.P(0, 1) = 1.2;
  auto r = validate_spec(s);
  EXPECT_FALSE(r.ok);
  EXPECT_GE(r.issues.size(), 3u);
}

TEST(Validate, CopulaMustBePositiveDefinite) {
  auto s = line({1.0, 1.0});
  s.entry_nodes = {0, 1};
  s.arrivals = {ArrivalLaw::uniform(0, 1), ArrivalLaw::uniform(0, 1)};
  s.correlation = CorrelationModel::gaussian_copula(mat2(1, 1.5, 1.5, 1));
  EXPECT_FALSE(validate_spec(s).ok);
  s.correlation = CorrelationModel::gaussian_copula(mat2(1, 0.5, 0.5, 1));
  EXPECT_TRUE(validate_spec(s).ok);
}

TEST(Cdf, UniformMidpoint) { EXPECT_DOUBLE_EQ(cdf_eval(ArrivalLaw::uniform(0, 1), 0.5), 0.5); }

TEST(Cdf, TriangularPeakAndQuarter) {
  auto law = ArrivalLaw::triangular(0, 1);
  EXPECT_DOUBLE_EQ(cdf_eval(law, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(law.density(0.5), 2.0);
  EXPECT_DOUBLE_EQ(cdf_eval(law, 0.25), 0.125);
}

TEST(Cdf, QuantileInvertsCdf) {
  auto tri = ArrivalLaw::triangular(0, 1);
  auto pl = ArrivalLaw::piecewise_linear({{0, 0}, {0.2, 0.5}, {1, 1}});
  for (double u : {0.01, 0.3, 0.5, 0.77, 0.99}) {
    EXPECT_NEAR(tri.cdf(tri.quantile(u)), u, 1e-12);
    EXPECT_NEAR(pl.cdf(pl.quantile(u)), u, 1e-12);
  }
}

TEST(RateCumulative, Constant) {
  auto s = ServiceProfile::constant(1.5);
  EXPECT_DOUBLE_EQ(rate_cumulative(s, 2.0), 3.0);
}

TEST(RateCumulative, Piecewise) {
  auto s = ServiceProfile::piecewise({{0, 1}, {1, 2}});
  EXPECT_DOUBLE_EQ(rate_cumulative(s, 2.0), 3.0);
  EXPECT_DOUBLE_EQ(s.inverse_cumulative(3.0), 2.0);
  EXPECT_DOUBLE_EQ(s.inverse_cumulative(0.5), 0.5);
}

TEST(RateCumulative, ZeroAtOrigin) {
  auto s = ServiceProfile::piecewise({{0, 1}, {1, 2}});
  s.set_origin(0.0, 3.0);
  EXPECT_EQ(rate_cumulative(s, 0.0), 0.0);
  EXPECT_THROW(rate_cumulative(s, 4.0), OutOfRangeError);
}

TEST(SpecJson, RoundTrip) {
  auto s = shipped("example2");
  auto j = spec_to_json(s);
  auto back = spec_from_json(j);
  EXPECT_EQ(spec_to_json(back), j);
  EXPECT_EQ(spec_hash(back), spec_hash(s));
}

TEST(SpecJson, UnknownFieldRejected) {
  auto j = spec_to_json(shipped("single_node"));
  j["colour"] = "blue";
  EXPECT_THROW(spec_from_json(j), SpecError);
  j.erase("colour");
  j["horizon"]["dt"] = 0.1;
  EXPECT_THROW(spec_from_json(j), SpecError);
}

TEST(SpecJson, ShippedSpecsValidate) {
  for (const char* n : {"example1", "example1_fast", "example2", "example2_fast", "single_node", "tandem_case_i",
                        "tandem_case_ii", "tandem_case_iii"}) {
    auto r = validate_spec(shipped(n));
    EXPECT_TRUE(r.ok) << n << '\n' << r.summary();
  }
}
