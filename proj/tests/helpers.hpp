#pragma once

// Small spec builders shared by the test files.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tnet/tnet.hpp"

namespace tnet::testing {

inline NetworkSpec shipped(const std::string& name) { return load_spec(std::string(TNET_SPECS_DIR) + "/" + name + ".json"); }

/// Line of K nodes fed at node 1; row i routes to i+1.
inline NetworkSpec line(std::vector<double> mu, ArrivalLaw law = ArrivalLaw::uniform(0, 1), double t1 = 3.0,
                        double h = 1e-3, RenewalBase base = RenewalBase::Exponential) {
  NetworkSpec s;
  s.K = mu.size();
  s.P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.K), static_cast<Eigen::Index>(s.K));
  for (std::size_t k = 0; k + 1 < s.K; ++k) s.P(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k + 1)) = 1.0;
  s.entry_nodes = {0};
  s.arrivals = {law};
  for (double m : mu) s.services.push_back(ServiceProfile::constant(m, base));
  s.horizon = TimeGrid(0.0, t1, h);
  s.anchor_services();
  return s;
}

inline Eigen::MatrixXd mat2(double a, double b, double c, double d) {
  Eigen::MatrixXd P(2, 2);
  P << a, b, c, d;
  return P;
}

inline Eigen::MatrixXd zero(std::size_t K) {
  return Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
}

}  // namespace tnet::testing
