#pragma once

// JSON (de)serialization of NetworkSpec.
//
// {
//   "name": "optional label",
//   "K": 2,
//   "P": [[0, 1], [0, 0]],                  row i = routing probabilities out of node i
//   "entry_nodes": [1],                     1-based
//   "arrivals": [{"kind": "uniform", "a": 0, "b": 1}],
//       kinds: uniform {a,b} | triangular {a,b} | piecewise_linear {knots: [[t,F],...]} | point {at}
//   "correlation": {"kind": "independent"}, kinds: independent | comonotone | gaussian_copula {rho}
//   "services": [{"rate": 1.0, "base": "exponential"},
//                {"rates": [[0, 1.0], [1, 2.0]], "base": "gamma", "scv": 0.5}],
//       base: deterministic | exponential | gamma (needs scv); default exponential
//   "horizon": {"t0": 0, "t1": 3, "h": 0.001}  h optional, default (t1 - t0) / 1000
// }
// Unknown fields are rejected.

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "tnet/network.hpp"

namespace tnet {

using json = nlohmann::json;

namespace detail {

inline void allow_only(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw SpecError(where + ": expected an object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw SpecError(where + ": unknown field '" + k + "'");
}

inline const json& need(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw SpecError(where + ": missing field '" + std::string(key) + "'");
  return j.at(key);
}

inline double num(const json& j, const std::string& where) {
  if (!j.is_number()) throw SpecError(where + ": expected a number");
  return j.get<double>();
}

inline Eigen::MatrixXd matrix_from(const json& j, const std::string& where) {
  if (!j.is_array()) throw SpecError(where + ": expected an array of rows");
  auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m(rows, rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != rows)
      throw SpecError(where + ": matrix must be square");
    for (Eigen::Index c = 0; c < rows; ++c) m(i, c) = num(row[static_cast<std::size_t>(c)], where);
  }
  return m;
}

inline json matrix_to(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    out.push_back(row);
  }
  return out;
}

inline ArrivalLaw law_from(const json& j, const std::string& where) {
  std::string kind = need(j, "kind", where).get<std::string>();
  if (kind == "uniform" || kind == "triangular") {
    allow_only(j, {"kind", "a", "b"}, where);
    double a = num(need(j, "a", where), where), b = num(need(j, "b", where), where);
    return kind == "uniform" ? ArrivalLaw::uniform(a, b) : ArrivalLaw::triangular(a, b);
  }
  if (kind == "point") {
    allow_only(j, {"kind", "at"}, where);
    return ArrivalLaw::point(num(need(j, "at", where), where));
  }
  if (kind == "piecewise_linear") {
    allow_only(j, {"kind", "knots"}, where);
    std::vector<std::pair<double, double>> knots;
    for (const auto& kn : need(j, "knots", where)) {
      if (!kn.is_array() || kn.size() != 2) throw SpecError(where + ": knots must be [t, F] pairs");
      knots.emplace_back(num(kn[0], where), num(kn[1], where));
    }
    try {
      return ArrivalLaw::piecewise_linear(std::move(knots));
    } catch (const ArgumentError& e) {
      throw SpecError(where + ": " + e.what());
    }
  }
  throw SpecError(where + ": unknown arrival kind '" + kind + "'");
}

inline json law_to(const ArrivalLaw& law) {
  switch (law.kind()) {
    case ArrivalLaw::Kind::Uniform:
      return {{"kind", "uniform"}, {"a", law.support_start()}, {"b", law.support_end()}};
    case ArrivalLaw::Kind::TriangularSymmetric:
      return {{"kind", "triangular"}, {"a", law.support_start()}, {"b", law.support_end()}};
    case ArrivalLaw::Kind::Point:
      return {{"kind", "point"}, {"at", law.support_start()}};
    case ArrivalLaw::Kind::PiecewiseLinearCDF: {
      json knots = json::array();
      for (const auto& [t, F] : law.knots()) knots.push_back({t, F});
      return {{"kind", "piecewise_linear"}, {"knots", knots}};
    }
  }
  return {};
}

inline ServiceProfile service_from(const json& j, const std::string& where) {
  allow_only(j, {"rate", "rates", "base", "scv"}, where);
  RenewalBase base = RenewalBase::Exponential;
  double scv = 1.0;
  if (j.contains("base")) {
    std::string b = j.at("base").get<std::string>();
    if (b == "deterministic") base = RenewalBase::Deterministic;
    else if (b == "exponential") base = RenewalBase::Exponential;
    else if (b == "gamma") base = RenewalBase::Gamma;
    else throw SpecError(where + ": unknown base '" + b + "'");
  }
  if (j.contains("scv")) {
    if (base != RenewalBase::Gamma) throw SpecError(where + ": scv only applies to the gamma base");
    scv = num(j.at("scv"), where);
  } else if (base == RenewalBase::Gamma) {
    throw SpecError(where + ": gamma base needs scv");
  }
  if (j.contains("rate") == j.contains("rates")) throw SpecError(where + ": give exactly one of rate / rates");
  if (j.contains("rate")) return ServiceProfile::constant(num(j.at("rate"), where), base, scv);
  std::vector<std::pair<double, double>> pieces;
  for (const auto& pc : j.at("rates")) {
    if (!pc.is_array() || pc.size() != 2) throw SpecError(where + ": rates must be [start, rate] pairs");
    pieces.emplace_back(num(pc[0], where), num(pc[1], where));
  }
  if (pieces.empty()) throw SpecError(where + ": rates must not be empty");
  return ServiceProfile::piecewise(std::move(pieces), base, scv);
}

inline json service_to(const ServiceProfile& s) {
  json out;
  if (s.is_constant()) {
    out["rate"] = s.pieces().front().second;
  } else {
    json pcs = json::array();
    for (const auto& [t, r] : s.pieces()) pcs.push_back({t, r});
    out["rates"] = pcs;
  }
  switch (s.base()) {
    case RenewalBase::Deterministic: out["base"] = "deterministic"; break;
    case RenewalBase::Exponential: out["base"] = "exponential"; break;
    case RenewalBase::Gamma:
      out["base"] = "gamma";
      out["scv"] = s.scv();
      break;
  }
  return out;
}

}  // namespace detail

/// Parses a spec document. Throws SpecError on malformed input; does not validate.
inline NetworkSpec spec_from_json(const json& j) {
  using namespace detail;
  allow_only(j, {"name", "K", "P", "entry_nodes", "arrivals", "correlation", "services", "horizon"}, "spec");
  NetworkSpec s;
  try {
    if (j.contains("name")) s.name = j.at("name").get<std::string>();
    int K = need(j, "K", "spec").get<int>();
    if (K <= 0) throw SpecError("spec: K must be positive");
    s.K = static_cast<std::size_t>(K);
    s.P = matrix_from(need(j, "P", "spec"), "P");
    for (const auto& e : need(j, "entry_nodes", "spec")) {
      int v = e.get<int>();
      if (v < 1) throw SpecError("entry_nodes: indices are 1-based");
      s.entry_nodes.push_back(static_cast<std::size_t>(v - 1));
    }
    std::size_t idx = 0;
    for (const auto& a : need(j, "arrivals", "spec"))
      s.arrivals.push_back(law_from(a, "arrivals[" + std::to_string(idx++) + "]"));
    if (j.contains("correlation")) {
      const auto& c = j.at("correlation");
      std::string kind = need(c, "kind", "correlation").get<std::string>();
      if (kind == "independent" || kind == "comonotone") {
        allow_only(c, {"kind"}, "correlation");
        s.correlation = kind == "independent" ? CorrelationModel::independent() : CorrelationModel::comonotone();
      } else if (kind == "gaussian_copula") {
        allow_only(c, {"kind", "rho"}, "correlation");
        s.correlation = CorrelationModel::gaussian_copula(matrix_from(need(c, "rho", "correlation"), "rho"));
      } else {
        throw SpecError("correlation: unknown kind '" + kind + "'");
      }
    }
    idx = 0;
    for (const auto& sv : need(j, "services", "spec"))
      s.services.push_back(service_from(sv, "services[" + std::to_string(idx++) + "]"));
    const auto& hz = need(j, "horizon", "spec");
    allow_only(hz, {"t0", "t1", "h"}, "horizon");
    double t0 = num(need(hz, "t0", "horizon"), "horizon");
    double t1 = num(need(hz, "t1", "horizon"), "horizon");
    double h = hz.contains("h") ? num(hz.at("h"), "horizon") : 1e-3 * (t1 - t0);
    try {
      s.horizon = TimeGrid(t0, t1, h);
    } catch (const ArgumentError& e) {
      throw SpecError(std::string("horizon: ") + e.what());
    }
  } catch (const json::exception& e) {
    throw SpecError(std::string("spec: ") + e.what());
  }
  s.anchor_services();
  return s;
}

inline json spec_to_json(const NetworkSpec& s) {
  using namespace detail;
  json j;
  if (!s.name.empty()) j["name"] = s.name;
  j["K"] = s.K;
  j["P"] = matrix_to(s.P);
  json entries = json::array();
  for (auto e : s.entry_nodes) entries.push_back(e + 1);
  j["entry_nodes"] = entries;
  json arr = json::array();
  for (const auto& a : s.arrivals) arr.push_back(law_to(a));
  j["arrivals"] = arr;
  switch (s.correlation.kind) {
    case CorrelationModel::Kind::Independent: j["correlation"] = {{"kind", "independent"}}; break;
    case CorrelationModel::Kind::Comonotone: j["correlation"] = {{"kind", "comonotone"}}; break;
    case CorrelationModel::Kind::GaussianCopula:
      j["correlation"] = {{"kind", "gaussian_copula"}, {"rho", matrix_to(s.correlation.rho)}};
      break;
  }
  json sv = json::array();
  for (const auto& p : s.services) sv.push_back(service_to(p));
  j["services"] = sv;
  j["horizon"] = {{"t0", s.horizon.t0()}, {"t1", s.horizon.t1()}, {"h", s.horizon.h()}};
  return j;
}

inline NetworkSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open spec file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw SpecError("'" + path + "': " + e.what());
  }
  return spec_from_json(j);
}

/// 64-bit FNV-1a of a byte string.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Hash of the canonical serialization.
inline std::string spec_hash(const NetworkSpec& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(spec_to_json(s).dump())));
  return buf;
}

}  // namespace tnet
