#include "tessera/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tessera/placement.hpp"
#include "tessera/planner.hpp"
#include "tessera/profiles.hpp"
#include "tessera/report.hpp"
#include "tessera/simulator.hpp"
#include "tessera/workload.hpp"

namespace fs = std::filesystem;

namespace tessera {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
}

// Every output file gets a manifest next to it. It holds nothing that
// varies between identical runs, wall time included.
class Manifest {
 public:
  explicit Manifest(std::string command) : command_(std::move(command)) {}
  void input(const std::string& role, const fs::path& p) {
    inputs_.push_back({{"role", role}, {"path", p.string()}, {"fnv1a64", hex64(fnv1a64(read_file(p)))}});
  }
  void param(const std::string& key, nlohmann::ordered_json v) { params_[key] = std::move(v); }
  void output(const fs::path& p) { outputs_.push_back(p.string()); }
  void write(const fs::path& p) const {
    nlohmann::ordered_json j;
    j["command"] = command_;
    j["version"] = TESSERA_VERSION;
    j["geometry_fnv1a64"] = hex64(MigGeometry::defaults().hash());
    j["inputs"] = inputs_;
    j["parameters"] = params_;
    j["outputs"] = outputs_;
    write_file(p, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  nlohmann::ordered_json inputs_ = nlohmann::ordered_json::array();
  nlohmann::ordered_json params_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json outputs_ = nlohmann::ordered_json::array();
};

fs::path manifest_for(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

FanOut parse_fanout(const std::string& s) {
  if (s == "rounded") return FanOut::rounded;
  if (s == "poisson") return FanOut::poisson;
  throw ConfigError("fan-out must be 'rounded' or 'poisson'");
}

Routing parse_routing(const std::string& s) {
  if (s == "shortest-queue") return Routing::shortest_queue;
  if (s == "round-robin") return Routing::round_robin;
  throw ConfigError("routing must be 'shortest-queue' or 'round-robin'");
}

struct Common {
  std::string app, profile, geometry;
  std::string space = "A+S+T";
  int slices = 28;
  double slack = 0.05;
  bool parallel = false;
  int max_candidates = 512;
};

void add_inputs(CLI::App* cmd, Common& c) {
  cmd->add_option("--app", c.app, "application JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--profile", c.profile, "profile CSV")->required()->check(CLI::ExistingFile);
}

void add_planning(CLI::App* cmd, Common& c, bool with_space) {
  cmd->add_option("--slices", c.slices, "available GPU slices")->capture_default_str();
  cmd->add_option("--slack", c.slack, "throughput slack")->capture_default_str();
  cmd->add_flag("--parallel", c.parallel, "split the search across threads");
  cmd->add_option("--max-candidates", c.max_candidates, "candidate bundles per task")->capture_default_str();
  if (with_space) cmd->add_option("--space", c.space, "search space: Unopt, or '+'-joined A, S, T")->capture_default_str();
}

SolverOptions solver_options(const Common& c) {
  SolverOptions o;
  o.parallel = c.parallel;
  o.max_candidates = c.max_candidates;
  return o;
}

MigGeometry geometry_of(const Common& c) {
  return c.geometry.empty() ? MigGeometry::defaults() : MigGeometry::load(c.geometry);
}

struct SimArgs {
  std::uint64_t seed = 1;
  double duration = 60.0;
  double warmup = 10.0;
  std::string fanout = "rounded";
  std::string routing = "shortest-queue";
  bool no_drop = false;
};

void add_sim(CLI::App* cmd, SimArgs& s) {
  cmd->add_option("--seed", s.seed, "random seed")->capture_default_str();
  cmd->add_option("--duration", s.duration, "simulated seconds per run")->capture_default_str();
  cmd->add_option("--warmup", s.warmup, "warm-up seconds")->capture_default_str();
  cmd->add_option("--fanout", s.fanout, "rounded | poisson")->capture_default_str();
  cmd->add_option("--routing", s.routing, "shortest-queue | round-robin")->capture_default_str();
  cmd->add_flag("--no-early-drop", s.no_drop, "disable early dropping");
}

SimOptions sim_options(const SimArgs& s, int slices) {
  SimOptions o;
  o.seed = s.seed;
  o.duration_s = s.duration;
  o.warmup_s = s.warmup;
  o.fan_out = parse_fanout(s.fanout);
  o.routing = parse_routing(s.routing);
  o.early_drop = !s.no_drop;
  o.slices_available = slices;
  return o;
}

}  // namespace

std::string version_string() {
  return std::string("tessera ") + TESSERA_VERSION + " geometry " + hex64(MigGeometry::defaults().hash());
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Planner and simulator for compound inference on partitioned GPUs", "tessera"};
  app.require_subcommand(0, 1);
  bool show_version = false;
  app.add_flag("--version", show_version, "print version and geometry hash");

  Common c;
  SimArgs sa;
  double demand = 0.0;
  double rate = -1.0;
  std::string out_path, csv_path, event_log, trace_path, out_dir, knobs_path;

  auto* plan_cmd = app.add_subcommand("plan", "plan one demand level");
  add_inputs(plan_cmd, c);
  add_planning(plan_cmd, c, true);
  plan_cmd->add_option("--demand", demand, "entry demand (req/s)")->required();
  plan_cmd->add_option("--out", out_path, "plan JSON (stdout if absent)");

  auto* sweep_cmd = app.add_subcommand("sweep", "max serviceable demand for all eight spaces");
  add_inputs(sweep_cmd, c);
  add_planning(sweep_cmd, c, false);
  sweep_cmd->add_option("--out", out_path, "sweep CSV (stdout if absent)");

  auto* sim_cmd = app.add_subcommand("simulate", "plan, pack and simulate one demand level");
  add_inputs(sim_cmd, c);
  add_planning(sim_cmd, c, true);
  add_sim(sim_cmd, sa);
  sim_cmd->add_option("--demand", demand, "demand to plan for (req/s)")->required();
  sim_cmd->add_option("--rate", rate, "offered rate (req/s), defaults to the planned demand");
  sim_cmd->add_option("--geometry", c.geometry, "geometry override JSON")->check(CLI::ExistingFile);
  sim_cmd->add_option("--out", out_path, "report JSON (stdout if absent)");
  sim_cmd->add_option("--csv", csv_path, "report as a CSV row");
  sim_cmd->add_option("--event-log", event_log, "event log CSV");

  auto* day_cmd = app.add_subcommand("run-day", "replay a demand trace bin by bin");
  add_inputs(day_cmd, c);
  add_planning(day_cmd, c, true);
  add_sim(day_cmd, sa);
  day_cmd->add_option("--trace", trace_path, "trace CSV")->required()->check(CLI::ExistingFile);
  day_cmd->add_option("--geometry", c.geometry, "geometry override JSON")->check(CLI::ExistingFile);
  day_cmd->add_option("--out-dir", out_dir, "output directory")->required();

  auto* gen_cmd = app.add_subcommand("gen", "generate synthetic inputs");
  gen_cmd->require_subcommand(1);
  auto* gen_profile = gen_cmd->add_subcommand("profile", "synthetic profile table");
  std::string gen_app;
  std::optional<std::uint64_t> gen_seed;
  gen_profile->add_option("--app", gen_app, "application JSON")->required()->check(CLI::ExistingFile);
  gen_profile->add_option("--knobs", knobs_path, "knob JSON")->required()->check(CLI::ExistingFile);
  gen_profile->add_option("--seed", gen_seed, "overrides the knob file's seed");
  gen_profile->add_option("--out", out_path, "profile CSV")->required();
  auto* gen_trace_cmd = gen_cmd->add_subcommand("trace", "synthetic diurnal trace");
  TraceShape shape;
  double scale = 100.0;
  std::uint64_t trace_seed = 1;
  gen_trace_cmd->add_option("--bins", shape.bins, "number of bins")->capture_default_str();
  gen_trace_cmd->add_option("--max", scale, "largest bin (req/s)")->capture_default_str();
  gen_trace_cmd->add_option("--base", shape.base, "curve offset")->capture_default_str();
  gen_trace_cmd->add_option("--amplitude", shape.amplitude, "diurnal amplitude")->capture_default_str();
  gen_trace_cmd->add_option("--noise", shape.noise_sigma, "noise sigma")->capture_default_str();
  gen_trace_cmd->add_option("--seed", trace_seed, "random seed")->capture_default_str();
  gen_trace_cmd->add_option("--out", out_path, "trace CSV")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }

  try {
    if (show_version) {
      out << version_string() << "\n";
      return kExitOk;
    }

    if (*plan_cmd) {
      Manifest m("plan");
      m.input("app", c.app);
      m.input("profile", c.profile);
      const auto spec = load_app(c.app);
      const auto profile = load_profile(c.profile);
      PlanRequest req{demand, c.slices, SearchSpace::parse(c.space), c.slack};
      m.param("demand_rps", demand);
      m.param("slices", c.slices);
      m.param("space", req.space.label());
      m.param("slack", c.slack);
      const auto r = plan(spec, profile, req, solver_options(c));
      const auto json = plan_to_json(r, spec, req);
      out << plan_summary(r, spec, req);
      if (out_path.empty()) {
        out << json;
      } else {
        write_file(out_path, json);
        m.output(out_path);
        m.write(manifest_for(out_path));
      }
      if (!r.feasible) {
        err << "infeasible: " << r.diagnosis << "\n";
        return kExitInfeasible;
      }
      return kExitOk;
    }

    if (*sweep_cmd) {
      Manifest m("sweep");
      m.input("app", c.app);
      m.input("profile", c.profile);
      m.param("slices", c.slices);
      m.param("slack", c.slack);
      const auto spec = load_app(c.app);
      const auto profile = load_profile(c.profile);
      const auto rows = sweep(spec, profile, c.slices, c.slack, solver_options(c));
      const auto csv = sweep_csv(rows);
      if (out_path.empty()) {
        out << csv;
      } else {
        write_file(out_path, csv);
        m.output(out_path);
        m.write(manifest_for(out_path));
        out << csv;
      }
      return kExitOk;
    }

    if (*sim_cmd) {
      Manifest m("simulate");
      m.input("app", c.app);
      m.input("profile", c.profile);
      const auto spec = load_app(c.app);
      const auto profile = load_profile(c.profile);
      const auto geometry = geometry_of(c);
      if (!c.geometry.empty()) m.input("geometry", c.geometry);
      PlanRequest req{demand, c.slices, SearchSpace::parse(c.space), c.slack};
      const double offered = rate < 0.0 ? demand : rate;
      m.param("demand_rps", demand);
      m.param("rate_rps", offered);
      m.param("slices", c.slices);
      m.param("space", req.space.label());
      m.param("seed", sa.seed);
      const auto r = plan(spec, profile, req, solver_options(c));
      if (!r.feasible) {
        err << "infeasible: " << r.diagnosis << "\n";
        return kExitInfeasible;
      }
      std::vector<SegmentType> segments;
      for (const auto& k : expand_instances(r.config)) segments.push_back(k.segment);
      const auto deployment = pack(segments, c.slices / geometry.slices_per_gpu, geometry);
      auto opts = sim_options(sa, c.slices);
      opts.event_log = !event_log.empty();
      const auto result = simulate(spec, profile, r.config, &deployment, offered, opts);
      const auto json = sim_report_json(result.report, spec);
      out << render(deployment, geometry);
      if (out_path.empty()) out << json;
      else {
        write_file(out_path, json);
        m.output(out_path);
      }
      if (!csv_path.empty()) {
        write_file(csv_path, sim_report_csv_header() + "\n" + sim_report_csv_row(result.report) + "\n");
        m.output(csv_path);
      }
      if (!event_log.empty()) {
        write_file(event_log, result.event_log);
        m.output(event_log);
      }
      if (!out_path.empty()) m.write(manifest_for(out_path));
      return kExitOk;
    }

    if (*day_cmd) {
      Manifest m("run-day");
      m.input("app", c.app);
      m.input("profile", c.profile);
      m.input("trace", trace_path);
      if (!c.geometry.empty()) m.input("geometry", c.geometry);
      const auto spec = load_app(c.app);
      const auto profile = load_profile(c.profile);
      const auto trace = load_trace(trace_path);
      DayOptions d;
      d.slices = c.slices;
      d.space = SearchSpace::parse(c.space);
      d.slack = c.slack;
      d.seed = sa.seed;
      d.sim = sim_options(sa, c.slices);
      d.solver = solver_options(c);
      d.geometry = geometry_of(c);
      m.param("slices", c.slices);
      m.param("space", d.space.label());
      m.param("seed", sa.seed);
      m.param("duration_s", sa.duration);
      m.param("warmup_s", sa.warmup);
      const auto records = run_day(spec, profile, trace, d);
      const fs::path dir(out_dir);
      write_file(dir / "day_report.csv", day_report_csv(records));
      write_file(dir / "day_long.csv", day_long_csv(records));
      write_file(dir / "sim_reports.json", day_reports_json(records, spec));
      for (auto name : {"day_report.csv", "day_long.csv", "sim_reports.json"}) m.output(dir / name);
      m.write(dir / "manifest.json");
      int failed = 0;
      for (const auto& r : records) failed += !r.error.empty();
      out << records.size() << " bins, " << failed << " without a plan\n";
      return kExitOk;
    }

    if (*gen_profile) {
      Manifest m("gen profile");
      m.input("app", gen_app);
      m.input("knobs", knobs_path);
      const auto spec = load_app(gen_app);
      auto knobs = load_knobs(knobs_path);
      if (gen_seed) knobs.seed = *gen_seed;
      m.param("seed", knobs.seed);
      const auto csv = dump_profile_csv(synth_profile(spec, knobs));
      write_file(out_path, csv);
      m.output(out_path);
      m.write(manifest_for(out_path));
      out << "profile " << hex64(fnv1a64(csv)) << "\n";
      return kExitOk;
    }

    if (*gen_trace_cmd) {
      Manifest m("gen trace");
      m.param("bins", shape.bins);
      m.param("max_rps", scale);
      m.param("base", shape.base);
      m.param("amplitude", shape.amplitude);
      m.param("noise_sigma", shape.noise_sigma);
      m.param("seed", trace_seed);
      const auto csv = dump_trace_csv(gen_trace(shape, scale, trace_seed));
      write_file(out_path, csv);
      m.output(out_path);
      m.write(manifest_for(out_path));
      out << "trace " << hex64(fnv1a64(csv)) << "\n";
      return kExitOk;
    }

    out << app.help();
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace tessera
