#include <gtest/gtest.h>

#include <sstream>

#include "tnet/paths.hpp"

using namespace tnet;

TEST(TimeGrid, SizeIncludesBothEnds) {
  TimeGrid g(0.0, 3.0, 1e-3);
  EXPECT_EQ(g.size(), 3001u);
  EXPECT_DOUBLE_EQ(g.last_time(), 3.0);
  EXPECT_THROW(TimeGrid(0, 1, 0), ArgumentError);
  EXPECT_THROW(TimeGrid(1, 1, 0.1), ArgumentError);
}

TEST(TimeGrid, IndexOfRejectsOffGridTimes) {
  TimeGrid g(0.0, 1.0, 0.25);
  EXPECT_EQ(g.index_of(0.5), 2u);
  EXPECT_THROW(g.index_of(0.3), ArgumentError);
  EXPECT_EQ(g.floor_index(0.3), 1u);
  EXPECT_EQ(g.floor_index(7.0), 4u);
}

TEST(PathEval, ConstantPath) {
  auto p = VectorPath::from_function(TimeGrid(0, 1, 0.01), 1, Interpolation::Linear, [](auto, double) { return 1.0; });
  EXPECT_DOUBLE_EQ(path_eval(p, 0, 0.37), 1.0);
}

TEST(PathEval, LinearInterpolation) {
  VectorPath p(TimeGrid(0, 1, 1), 1, Interpolation::Linear);
  p(0, 1) = 1.0;
  EXPECT_DOUBLE_EQ(path_eval(p, 0, 0.25), 0.25);
}

TEST(PathEval, StepIsRightContinuous) {
  VectorPath p(TimeGrid(0, 1, 0.5), 1, Interpolation::Step);
  p(0, 1) = 1.0;
  p(0, 2) = 1.0;
  EXPECT_DOUBLE_EQ(path_eval(p, 0, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(path_eval(p, 0, 0.4999), 0.0);
}

TEST(PathEval, OutsideHorizonThrows) {
  VectorPath p(TimeGrid(0, 1, 0.5), 1);
  EXPECT_THROW(path_eval(p, 0, 1.5), OutOfRangeError);
  EXPECT_THROW(path_eval(p, 0, -0.1), OutOfRangeError);
}

TEST(RunningSupPlus, NegativePathGivesZero) {
  auto p = VectorPath::from_function(TimeGrid(0, 1, 0.01), 1, Interpolation::Linear, [](auto, double t) { return -t; });
  EXPECT_EQ(sup_norm(path_running_sup_plus(p)), 0.0);
}

TEST(RunningSupPlus, IncreasingPathIsItsOwnSup) {
  auto p = VectorPath::from_function(TimeGrid(0, 1, 0.01), 1, Interpolation::Linear, [](auto, double t) { return t; });
  EXPECT_EQ(sup_distance(path_running_sup_plus(p), p), 0.0);
}

TEST(RunningSupPlus, HoldsThePeak) {
  VectorPath p(TimeGrid(0, 1, 0.5), 1);
  p(0, 1) = 1.0;
  p(0, 2) = 0.5;
  auto s = path_running_sup_plus(p);
  EXPECT_EQ(s(0, 0), 0.0);
  EXPECT_EQ(s(0, 1), 1.0);
  EXPECT_EQ(s(0, 2), 1.0);
}

TEST(PathIntegral, ConstantRate) {
  auto f = VectorPath::from_function(TimeGrid(0, 3, 0.01), 1, Interpolation::Linear, [](auto, double) { return 2.0; });
  EXPECT_NEAR(path_integral(f, 0.0, 3.0), 6.0, 1e-12);
}

TEST(PathIntegral, TriangularRisingBranch) {
  auto f = VectorPath::from_function(TimeGrid(0, 1, 0.001), 1, Interpolation::Linear, [](auto, double t) { return 4 * t; });
  // Trapezoid is exact on linear pieces.
  EXPECT_NEAR(path_integral(f, 0.0, 0.5), 0.5, 1e-12);
  EXPECT_NEAR(path_integral(f, 0.1234, 0.5), 0.5 - 2 * 0.1234 * 0.1234, 1e-12);
}

TEST(PathIntegral, ZeroRateAndErrors) {
  VectorPath f(TimeGrid(0, 1, 0.1), 1);
  EXPECT_EQ(path_integral(f, 0.0, 1.0), 0.0);
  EXPECT_THROW(path_integral(f, 0.6, 0.2), ArgumentError);
  EXPECT_THROW(path_integral(f, 0.0, 2.0), OutOfRangeError);
}

TEST(PathIntegral, AdditiveOverSubintervals) {
  auto f = VectorPath::from_function(TimeGrid(0, 2, 0.01), 1, Interpolation::Step,
                                     [](auto, double t) { return t < 1 ? 1.0 : 3.0; });
  double whole = path_integral(f, 0.0, 2.0);
  EXPECT_NEAR(path_integral(f, 0.0, 0.733) + path_integral(f, 0.733, 2.0), whole, 1e-12);
}

TEST(PathCsv, HeaderAndPrecision) {
  VectorPath p(TimeGrid(0, 1, 0.5), 2);
  p(0, 1) = 1.0 / 3.0;
  std::ostringstream os;
  write_path_csv(os, p);
  std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "t,v_1,v_2");
  EXPECT_NE(s.find("0.5,0.333333333333,0"), std::string::npos);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 4);
}
