#pragma once

// Command-line driver: tnet <command> --spec FILE [--n N] [--reps R]
// [--seed S] [--grid-h H] [--out DIR]. Kept in a header so tests can run
// commands in-process.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tnet/tnet.hpp"

#ifndef TNET_SPECS_DIR
#define TNET_SPECS_DIR "specs"
#endif

namespace tnet::cli {

namespace fs = std::filesystem;

enum Exit : int { kOk = 0, kError = 1, kInvalidSpec = 2, kCheckFailed = 3 };

struct Config {
  std::string command;  ///< simulate | fluid | diffuse | bottlenecks | verify | reproduce
  std::string target;   ///< verify: fslln | fclt | service; reproduce: example1 | example2 | tandem-uniform
  std::string spec_path;
  std::size_t n = 10000;
  std::size_t reps = 100;
  bool reps_set = false;
  std::uint64_t seed = 1;
  std::optional<double> grid_h;
  std::string out = "out";
  std::optional<double> t;
  std::vector<std::size_t> nodes;  ///< 1-based, verify fclt
  std::vector<double> n_list{100, 1000, 10000};
  std::string busy_form = "rate";
  std::string specs_dir = TNET_SPECS_DIR;
  double theta = 0.5;
  std::vector<std::string> argv;
};

struct InvalidSpec : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tracks files written under one output directory. Each file goes through
/// a temporary name; rollback() removes everything this run created.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {
    if (!fs::exists(root_)) {
      fs::create_directories(root_);
      created_.push_back(root_);
    }
  }

  fs::path path(const std::string& name) const { return root_ / name; }

  void write(const std::string& name, const std::string& content) {
    fs::path p = root_ / name;
    if (!fs::exists(p.parent_path())) {
      fs::create_directories(p.parent_path());
      created_.push_back(p.parent_path());
    }
    fs::path tmp = p;
    tmp += ".partial";
    {
      std::ofstream f(tmp, std::ios::binary);
      if (!f) throw std::runtime_error("cannot write " + tmp.string());
      f << content;
      if (!f) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, p);
    files_.push_back(name);
  }

  void write_json(const std::string& name, const nlohmann::json& j) { write(name, j.dump(2) + "\n"); }

  void write_path(const std::string& name, const VectorPath& p, const std::string& prefix) {
    std::vector<std::string> names;
    for (std::size_t k = 0; k < p.dim(); ++k) names.push_back(prefix + "_" + std::to_string(k + 1));
    std::ostringstream os;
    write_path_csv(os, p, names);
    write(name, os.str());
  }

  const std::vector<std::string>& files() const { return files_; }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& f : files_) fs::remove(root_ / f, ec);
    for (auto it = created_.rbegin(); it != created_.rend(); ++it)
      if (fs::is_empty(*it, ec)) fs::remove(*it, ec);
    files_.clear();
  }

 private:
  fs::path root_;
  std::vector<std::string> files_;
  std::vector<fs::path> created_;
};

inline NetworkSpec prepare_spec(const std::string& path, const std::optional<double>& grid_h) {
  NetworkSpec spec = load_spec(path);
  if (grid_h) {
    spec.horizon = TimeGrid(spec.horizon.t0(), spec.horizon.t1(), *grid_h);
    spec.anchor_services();
  }
  auto rep = validate_spec(spec);
  if (!rep.ok) throw InvalidSpec("spec '" + path + "' failed validation:\n" + rep.summary());
  return spec;
}

inline nlohmann::json manifest(const Config& c, const std::vector<std::pair<std::string, const NetworkSpec*>>& specs,
                               const std::vector<std::string>& files) {
  nlohmann::json sj = nlohmann::json::array();
  for (const auto& [path, s] : specs)
    sj.push_back({{"path", path}, {"name", s->name}, {"hash", spec_hash(*s)}, {"resolved", spec_to_json(*s)}});
  nlohmann::json j = {{"tool", "tnet"},
                      {"version", kVersion},
                      {"command", c.command},
                      {"seed", c.seed},
                      {"n", c.n},
                      {"reps", c.reps},
                      {"specs", sj},
                      {"files", files},
                      {"argv", c.argv}};
  if (!c.target.empty()) j["target"] = c.target;
  if (c.grid_h) j["grid_h"] = *c.grid_h;
  if (c.t) j["t"] = *c.t;
  j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  return j;
}

// ------------------------------------------------------------------ commands

inline int do_simulate(const Config& c, const NetworkSpec& spec, OutputDir& out, std::ostream& log) {
  auto tr = simulate(spec, c.n, RngStream(c.seed, 0));
  std::ostringstream ev;
  write_event_log_csv(ev, tr);
  out.write("events.csv", ev.str());
  out.write_path("queue.csv", tr.Q, "Q");
  out.write_path("queue_fluid_scaled.csv", fluid_scale(tr), "Q");
  auto cons = check_conservation(tr);
  out.write_json("simulate.json", {{"n", tr.n},
                                   {"events", tr.events.size()},
                                   {"exits", tr.exits},
                                   {"in_system_at_end", tr.in_system_at_end},
                                   {"end_time", tr.end_time},
                                   {"truncated", tr.truncated},
                                   {"warning", tr.warning},
                                   {"conservation",
                                    {{"flow", cons.flow},
                                     {"job", cons.job},
                                     {"work", cons.work},
                                     {"fifo", cons.fifo},
                                     {"issues", cons.issues}}}});
  log << "simulate: " << tr.events.size() << " events, conservation " << (cons.ok() ? "ok" : "FAILED") << "\n";
  return cons.ok() ? kOk : kCheckFailed;
}

inline BusyTimeForm busy_form(const std::string& s) {
  if (s == "rate") return BusyTimeForm::RateScaled;
  if (s == "corollary") return BusyTimeForm::Corollary;
  throw ArgumentError("--busy-form must be 'rate' or 'corollary'");
}

inline void write_fluid(const NetworkSpec& spec, const FluidSolution& f, OutputDir& out, const std::string& prefix) {
  out.write_path(prefix + "netput.csv", f.X, "X");
  out.write_path(prefix + "fluid_queue.csv", f.Q, "Q");
  out.write_path(prefix + "regulator.csv", f.Y, "Y");
  out.write_path(prefix + "busy_time.csv", f.B, "B");
  if (f.workload_supported) out.write_path(prefix + "workload.csv", f.Z, "Z");
  nlohmann::json j = {{"iterations", f.iterations},
                      {"tol_c", f.tol_c},
                      {"busy_form", f.busy_form == BusyTimeForm::RateScaled ? "rate" : "corollary"},
                      {"mass_balance_error", fluid_mass_balance_error(spec, f)},
                      {"workload_supported", f.workload_supported}};
  if (spec.J() == 1) j["crossings"] = crossing_times_json(crossing_times(spec, &f));
  out.write_json(prefix + "fluid.json", j);
}

inline int do_fluid(const Config& c, const NetworkSpec& spec, OutputDir& out, std::ostream& log) {
  auto f = fluid_solve(spec, busy_form(c.busy_form));
  write_fluid(spec, f, out, "");
  log << "fluid: " << f.iterations << " iterations, sup Q = " << sup_norm(f.Q) << "\n";
  return kOk;
}

inline bool tandem_eligible(const NetworkSpec& spec) {
  try {
    TandemDiffusion td(spec);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

inline int do_diffuse(const Config& c, const NetworkSpec& spec, OutputDir& out, std::ostream& log) {
  DiffusionModel model(spec);
  const auto& g = spec.horizon;
  const std::size_t R = std::max<std::size_t>(1, c.reps), K = spec.K;
  RngStream rng(c.seed, 0);
  std::vector<DiffusionSample> s(R);
  parallel_for(R, [&](std::size_t r) { s[r] = model.sample(rng.substream(r)); });
  out.write_path("sample_netput.csv", s[0].X, "X");
  out.write_path("sample_queue.csv", s[0].Q, "Q");
  VectorPath mean(g, K), sd(g, K);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < g.size(); ++i) {
      double m1 = 0, m2 = 0;
      for (const auto& x : s) m1 += x.Q(k, i) / R;
      for (const auto& x : s) m2 += (x.Q(k, i) - m1) * (x.Q(k, i) - m1);
      mean(k, i) = m1;
      sd(k, i) = R > 1 ? std::sqrt(m2 / (R - 1)) : 0.0;
    }
  out.write_path("queue_mean.csv", mean, "mean");
  out.write_path("queue_sd.csv", sd, "sd");
  nlohmann::json j = {{"reps", R}, {"bridge_clamps", model.bridge_clamps()}};
  if (c.t) {
    auto pts = diffusion_queue_pointwise(model, *c.t, rng.substream(0x7100), R);
    j["pointwise"] = {{"t", *c.t}, {"samples", pts}};
  }
  if (tandem_eligible(spec)) {
    TandemDiffusion td(spec);
    auto r0 = td.sample(rng.substream(0));
    nlohmann::json d = nlohmann::json::array();
    for (const auto& e : r0.discontinuities)
      d.push_back({{"node", e.node + 1}, {"t", e.t}, {"left", e.left}, {"value", e.value}, {"right", e.right},
                   {"type", e.type}});
    j["tandem"] = {{"case", tandem_case_name(td.tandem_case())}, {"discontinuities", d}};
  }
  out.write_json("diffuse.json", j);
  log << "diffuse: " << R << " samples\n";
  return kOk;
}

inline int do_bottlenecks(const Config& c, const NetworkSpec& spec, OutputDir& out, std::ostream& log,
                          const std::string& prefix = "") {
  BottleneckOptions o;
  o.reps = c.reps;
  o.theta = c.theta;
  auto rep = bottleneck_timeline(spec, RngStream(c.seed, 0), o);
  out.write_json(prefix + "bottlenecks.json", bottleneck_json(rep));
  out.write_path(prefix + "bottleneck_exceedance.csv", rep.exceed, "frac");
  log << "bottlenecks (" << spec.name << "):";
  for (const auto& p : rep.phases()) {
    log << " [" << p.a << "," << p.b << "){";
    for (std::size_t i = 0; i < p.set.size(); ++i) log << (i ? "," : "") << p.set[i] + 1;
    log << "}";
  }
  log << "\n";
  return kOk;
}

inline int do_verify(const Config& c, const NetworkSpec& spec, OutputDir& out, std::ostream& log) {
  RngStream rng(c.seed, 0);
  ConvergenceResult r;
  if (c.target == "fslln") {
    r = check_fslln_arrivals(spec, c.n_list, c.reps, rng);
  } else if (c.target == "service") {
    r = check_service_routing(spec, c.n_list, c.reps, rng);
  } else if (c.target == "fclt") {
    if (!c.t) throw ArgumentError("verify fclt needs --t");
    FcltOptions o;
    for (auto k : c.nodes) {
      if (k == 0) throw ArgumentError("--node is 1-based");
      o.nodes.push_back(k - 1);
    }
    r = check_fclt_queue(spec, *c.t, c.n, c.reps, rng, o);
  } else {
    throw ArgumentError("verify target must be fslln, fclt or service");
  }
  out.write_json("verify_" + c.target + ".json", r.to_json());
  log << "verify " << c.target << ": " << (r.pass ? "pass" : "fail") << "\n";
  return r.pass ? kOk : kCheckFailed;
}

inline int do_reproduce(Config c, OutputDir& out, std::ostream& log,
                        std::vector<std::pair<std::string, NetworkSpec>>& used) {
  if (!c.reps_set) c.reps = c.target == "tandem-uniform" ? 200 : 500;
  auto load = [&](const std::string& file) -> const NetworkSpec& {
    std::string p = (fs::path(c.specs_dir) / file).string();
    used.emplace_back(p, prepare_spec(p, c.grid_h));
    return used.back().second;
  };
  if (c.target == "example1" || c.target == "example2") {
    const char* files[2][2] = {{"example1.json", "example1_fast.json"}, {"example2.json", "example2_fast.json"}};
    int idx = c.target == "example1" ? 0 : 1;
    for (const char* f : files[idx]) {
      const auto& spec = load(f);
      std::string prefix = spec.name + "/";
      write_fluid(spec, fluid_solve(spec), out, prefix);
      do_bottlenecks(c, spec, out, log, prefix);
    }
    return kOk;
  }
  if (c.target == "tandem-uniform") {
    int status = kOk;
    for (const char* f : {"tandem_case_i.json", "tandem_case_ii.json", "tandem_case_iii.json"}) {
      const auto& spec = load(f);
      std::string prefix = spec.name + "/";
      write_fluid(spec, fluid_solve(spec), out, prefix);
      TandemDiffusion td(spec);
      const std::size_t R = c.reps;
      std::vector<TandemPathResult> res(R);
      RngStream rng(c.seed, 0);
      parallel_for(R, [&](std::size_t r) { res[r] = td.sample(rng.substream(r)); });
      std::size_t wrong = 0, seen = 0;
      nlohmann::json per = nlohmann::json::array();
      double tau = td.tau1().value_or(spec.horizon.t0());
      for (const auto& r : res) {
        double x1 = r.sample.X.eval(0, tau);
        std::string want = x1 >= 0.0 ? "right" : "left", got = "none";
        for (const auto& d : r.discontinuities)
          if (d.node == 0 && std::abs(d.t - tau) < 1e-9) got = d.type;
        ++seen;
        if (got != want) ++wrong;
        per.push_back({{"x1_tau1", x1}, {"type", got}, {"expected", want}});
      }
      nlohmann::json phases = nlohmann::json::array();
      for (std::size_t k = 0; k < 2; ++k)
        for (const auto& p : td.phases(k)) phases.push_back({{"node", k + 1}, {"phase", phase_name(p.kind)}, {"a", p.a}, {"b", p.b}});
      out.write_json(prefix + "tandem.json", {{"case", tandem_case_name(td.tandem_case())},
                                              {"tau1", tau},
                                              {"phases", phases},
                                              {"samples", seen},
                                              {"misclassified", wrong},
                                              {"per_sample", per}});
      out.write_path(prefix + "sample_queue.csv", res[0].sample.Q, "Q");
      log << spec.name << ": case " << tandem_case_name(td.tandem_case()) << ", " << wrong << "/" << seen
          << " misclassified at tau1 = " << tau << "\n";
      if (wrong) status = kCheckFailed;
    }
    return status;
  }
  throw ArgumentError("reproduce target must be example1, example2 or tandem-uniform");
}

/// Runs one configured command. Artifacts are removed again on any error.
inline int run(const Config& c, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  std::optional<OutputDir> out;
  try {
    std::vector<std::pair<std::string, NetworkSpec>> used;
    std::optional<NetworkSpec> spec;
    if (c.command != "reproduce") {
      if (c.spec_path.empty()) throw ArgumentError("--spec is required");
      spec = prepare_spec(c.spec_path, c.grid_h);
    }
    out.emplace(c.out);
    int status = kOk;
    if (c.command == "simulate") status = do_simulate(c, *spec, *out, log);
    else if (c.command == "fluid") status = do_fluid(c, *spec, *out, log);
    else if (c.command == "diffuse") status = do_diffuse(c, *spec, *out, log);
    else if (c.command == "bottlenecks") status = do_bottlenecks(c, *spec, *out, log);
    else if (c.command == "verify") status = do_verify(c, *spec, *out, log);
    else if (c.command == "reproduce") status = do_reproduce(c, *out, log, used);
    else throw ArgumentError("unknown command '" + c.command + "'");
    std::vector<std::pair<std::string, const NetworkSpec*>> refs;
    if (spec) refs.emplace_back(c.spec_path, &*spec);
    for (const auto& [p, s] : used) refs.emplace_back(p, &s);
    auto files = out->files();
    out->write_json("manifest.json", manifest(c, refs, files));
    return status;
  } catch (const InvalidSpec& e) {
    if (out) out->rollback();
    err << "error: " << e.what() << "\n";
    return kInvalidSpec;
  } catch (const SpecError& e) {
    if (out) out->rollback();
    err << "error: " << e.what() << "\n";
    return kInvalidSpec;
  } catch (const std::exception& e) {
    if (out) out->rollback();
    err << "error: " << e.what() << "\n";
    return kError;
  }
}

/// Parses argv with CLI11 and runs the selected command.
inline int main(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  Config c;
  for (int i = 0; i < argc; ++i) c.argv.emplace_back(argv[i]);
  CLI::App app{"Transitory queueing network toolkit"};
  app.require_subcommand(1);
  std::optional<double> h, t;

  auto common = [&](CLI::App* s, bool need_spec) {
    auto* o = s->add_option("--spec", c.spec_path, "network spec (JSON)");
    if (need_spec) o->required()->check(CLI::ExistingFile);
    s->add_option("--n", c.n, "population size");
    s->add_option("--reps", c.reps, "replications");
    s->add_option("--seed", c.seed, "random seed");
    s->add_option("--grid-h", h, "override the grid step");
    s->add_option("--out", c.out, "output directory");
  };
  auto* sim = app.add_subcommand("simulate", "discrete-event run, event log and queue paths");
  common(sim, true);
  auto* flu = app.add_subcommand("fluid", "fluid netput, queue, regulator, busy time, workload");
  common(flu, true);
  flu->add_option("--busy-form", c.busy_form, "rate | corollary")->check(CLI::IsMember({"rate", "corollary"}));
  auto* dif = app.add_subcommand("diffuse", "diffusion netput and queue samples");
  common(dif, true);
  dif->add_option("--t", t, "also draw pointwise queue samples at this time");
  auto* bot = app.add_subcommand("bottlenecks", "Monte Carlo bottleneck timeline");
  common(bot, true);
  bot->add_option("--theta", c.theta, "exceedance fraction threshold");
  auto* ver = app.add_subcommand("verify", "convergence checks");
  common(ver, true);
  ver->add_option("check", c.target, "fslln | fclt | service")
      ->required()
      ->check(CLI::IsMember({"fslln", "fclt", "service"}));
  ver->add_option("--t", t, "time for the fclt check");
  ver->add_option("--node", c.nodes, "1-based nodes for the fclt check");
  ver->add_option("--n-list", c.n_list, "population sizes for fslln / service")->delimiter(',');
  auto* rep = app.add_subcommand("reproduce", "shipped scenarios end to end");
  common(rep, false);
  rep->add_option("scenario", c.target, "example1 | example2 | tandem-uniform")
      ->required()
      ->check(CLI::IsMember({"example1", "example2", "tandem-uniform"}));
  rep->add_option("--specs-dir", c.specs_dir, "directory holding the shipped specs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, eo;
    int code = app.exit(e, o, eo);
    log << o.str();
    err << eo.str();
    return code;
  }
  for (auto* s : app.get_subcommands()) {
    c.command = s->get_name();
    c.reps_set = s->count("--reps") > 0;
  }
  if (c.command == "verify" && !c.reps_set) c.reps = c.target == "fclt" ? 500 : 50;
  c.grid_h = h;
  c.t = t;
  return run(c, log, err);
}

}  // namespace tnet::cli
