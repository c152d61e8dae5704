#include "tessera/report.hpp"

#include <cstdio>

#include <json.hpp>

namespace tessera {

using ojson = nlohmann::ordered_json;

namespace {

std::string path_name(const AppSpec& app, const Path& p) {
  std::string name;
  for (auto t : p) name += (name.empty() ? "" : ">") + app.graph.tasks[t].id;
  return name;
}

ojson verdict_json(const ConstraintVerdict& v) {
  return ojson{{"constraint", v.constraint}, {"subject", v.subject}, {"lhs", v.lhs},
               {"rhs", v.rhs},               {"margin", v.margin},   {"passed", v.passed}};
}

// CSV cells never need quoting except free text.
std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

}  // namespace

std::string plan_to_json(const PlanResult& r, const AppSpec& app, const PlanRequest& request) {
  const auto& g = app.graph;
  const auto& c = r.config;
  ojson j;
  j["app"] = app.name;
  j["request"] = {{"demand_rps", request.demand_rps},
                  {"slices", request.slices},
                  {"space", request.space.label()},
                  {"slack", request.slack}};
  j["feasible"] = r.feasible;
  j["objective"] = r.objective;
  j["a_max"] = r.a_max;
  j["system_accuracy"] = c.system_accuracy;
  j["total_slices"] = c.total_slices;

  auto instances = ojson::array();
  for (const auto& [k, n] : c.counts) {
    const auto& task = g.tasks[k.task];
    instances.push_back({{"task", task.id},
                         {"variant", task.variants[k.variant].id},
                         {"mig", std::string(to_string(k.segment.mig))},
                         {"mps", k.segment.mps},
                         {"batch", k.batch},
                         {"count", n}});
  }
  j["instances"] = instances;

  auto tasks = ojson::array();
  for (TaskIndex t = 0; t < g.size(); ++t) {
    ojson row{{"id", g.tasks[t].id},
              {"demand_rps", c.demand[t]},
              {"required_rps", c.demand[t] * (1.0 + request.slack)},
              {"capacity_rps", c.capacity[t]},
              {"latency_ms", c.latency[t]},
              {"slices", c.slices[t]},
              {"accuracy", c.accuracy[t]}};
    if (!r.latency_budget_ms.empty()) {
      row["latency_budget_ms"] = r.latency_budget_ms[t];
      row["slice_budget"] = r.slice_budget[t];
    }
    tasks.push_back(row);
  }
  j["tasks"] = tasks;

  auto edges = ojson::array();
  for (std::size_t e = 0; e < g.edges.size(); ++e)
    edges.push_back({{"src", g.tasks[g.edges[e].src].id},
                     {"dst", g.tasks[g.edges[e].dst].id},
                     {"factor", c.edge_factor[e]}});
  j["edges"] = edges;

  auto paths = ojson::array();
  for (std::size_t p = 0; p < app.paths.size(); ++p) {
    double lat = 0.0;
    for (auto t : app.paths[p]) lat += 2.0 * c.latency[t];
    paths.push_back({{"tasks", path_name(app, app.paths[p])},
                     {"fraction", app.path_fractions[p]},
                     {"accuracy", c.path_accuracy[p]},
                     {"latency_ms", lat}});
  }
  j["paths"] = paths;

  auto constraints = ojson::array();
  for (const auto& v : validate(c, app, request).verdicts) constraints.push_back(verdict_json(v));
  j["constraints"] = constraints;
  j["binding"] = r.binding ? verdict_json(*r.binding) : ojson(nullptr);
  j["diagnosis"] = r.diagnosis;
  j["solver"] = {{"nodes", r.stats.nodes}, {"exhaustive", r.stats.exhaustive}, {"truncated", r.stats.truncated}};
  return j.dump(2) + "\n";
}

std::string plan_summary(const PlanResult& r, const AppSpec& app, const PlanRequest& request) {
  const auto& g = app.graph;
  const auto& c = r.config;
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%s  space=%s  demand=%s rps  slices=%d\n", app.name.c_str(),
                request.space.label().c_str(), format_number(request.demand_rps).c_str(), request.slices);
  out += line;
  if (!r.feasible) {
    out += "INFEASIBLE: " + r.diagnosis + "\n";
    return out;
  }
  std::snprintf(line, sizeof line, "objective %.6f  accuracy %.4f  slices %d\n\n", r.objective,
                c.system_accuracy, c.total_slices);
  out += line;
  std::snprintf(line, sizeof line, "%-16s %-14s %-11s %6s %6s\n", "task", "variant", "segment", "batch", "count");
  out += line;
  for (const auto& [k, n] : c.counts) {
    std::snprintf(line, sizeof line, "%-16s %-14s %-11s %6d %6d\n", g.tasks[k.task].id.c_str(),
                  g.tasks[k.task].variants[k.variant].id.c_str(), k.segment.label().c_str(), k.batch, n);
    out += line;
  }
  out += "\n";
  std::snprintf(line, sizeof line, "%-16s %10s %10s %9s %7s %8s\n", "task", "demand", "capacity", "latency",
                "slices", "acc");
  out += line;
  for (TaskIndex t = 0; t < g.size(); ++t) {
    std::snprintf(line, sizeof line, "%-16s %10.2f %10.2f %9.2f %7d %8.4f\n", g.tasks[t].id.c_str(), c.demand[t],
                  c.capacity[t], c.latency[t], c.slices[t], c.accuracy[t]);
    out += line;
  }
  out += "\n";
  for (const auto& v : validate(c, app, request).verdicts) {
    std::snprintf(line, sizeof line, "%-4s %-10s %-24s %12.4f vs %12.4f\n", v.passed ? "ok" : "FAIL",
                  v.constraint.c_str(), v.subject.c_str(), v.lhs, v.rhs);
    out += line;
  }
  return out;
}

std::string sim_report_json(const SimReport& s, const AppSpec& app) {
  const auto& g = app.graph;
  ojson j;
  j["offered_rps"] = s.offered_rps;
  j["duration_s"] = s.duration_s;
  j["arrived"] = s.arrived;
  j["completed"] = s.completed;
  j["dropped"] = s.dropped;
  j["late"] = s.late;
  j["drops"] = {{"deadline_infeasible", s.drops_deadline},
                {"stale", s.drops_stale},
                {"no_capacity", s.drops_no_capacity},
                {"missed", s.late}};
  j["drop_weight"] = s.drop_weight;
  j["violation_rate"] = s.violation_rate;
  j["accuracy"] = s.accuracy ? ojson(*s.accuracy) : ojson(nullptr);
  j["accuracy_drop_pct"] = s.accuracy_drop_pct;
  j["slices_used"] = s.slices_used;
  j["slices_fraction"] = s.slices_fraction;
  j["instances"] = s.instances;
  j["unplaced"] = s.unplaced;
  j["latency_p50_ms"] = s.latency_p50_ms;
  j["latency_p99_ms"] = s.latency_p99_ms;
  j["max_queue"] = s.max_queue;
  auto tasks = ojson::array();
  for (TaskIndex t = 0; t < g.size(); ++t)
    tasks.push_back({{"id", g.tasks[t].id},
                     {"measured_rps", t < s.task_rps.size() ? s.task_rps[t] : 0.0},
                     {"predicted_rps", t < s.predicted_task_rps.size() ? s.predicted_task_rps[t] : 0.0}});
  j["tasks"] = tasks;
  auto factors = ojson::array();
  for (const auto& f : s.factors)
    factors.push_back({{"task", g.tasks[f.task].id},
                       {"variant", g.tasks[f.task].variants[f.variant].id},
                       {"dst", g.tasks[g.edges[f.edge].dst].id},
                       {"served", f.served},
                       {"emitted", f.emitted},
                       {"factor", f.factor()}});
  j["factors"] = factors;
  return j.dump(2) + "\n";
}

std::string sim_report_csv_header() {
  return "offered_rps,arrived,completed,dropped,late,drops_deadline,drops_stale,drops_no_capacity,drop_weight,"
         "violation_rate,accuracy,accuracy_drop_pct,slices_used,slices_fraction,instances,unplaced,"
         "latency_p50_ms,latency_p99_ms,max_queue";
}

std::string sim_report_csv_row(const SimReport& s) {
  std::string out;
  auto add = [&](const std::string& v) {
    if (!out.empty()) out += ',';
    out += v;
  };
  add(format_number(s.offered_rps));
  add(std::to_string(s.arrived));
  add(std::to_string(s.completed));
  add(std::to_string(s.dropped));
  add(std::to_string(s.late));
  add(std::to_string(s.drops_deadline));
  add(std::to_string(s.drops_stale));
  add(std::to_string(s.drops_no_capacity));
  add(format_number(s.drop_weight));
  add(format_number(s.violation_rate));
  add(s.accuracy ? format_number(*s.accuracy) : "");
  add(format_number(s.accuracy_drop_pct));
  add(std::to_string(s.slices_used));
  add(format_number(s.slices_fraction));
  add(std::to_string(s.instances));
  add(std::to_string(s.unplaced));
  add(format_number(s.latency_p50_ms));
  add(format_number(s.latency_p99_ms));
  add(std::to_string(s.max_queue));
  return out;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "space,max_demand_rps,pct_slices_used,ratio_to_unopt,error\n";
  for (const auto& r : rows)
    out += r.space.label() + ',' + format_number(r.max_demand_rps) + ',' + format_number(r.pct_slices) + ',' +
           format_number(r.ratio) + ',' + quote(r.error) + '\n';
  return out;
}

std::string day_report_csv(std::span<const BinRecord> records) {
  std::string out = "bin_index,demand_rps,predicted_rps,planned_rps,feasible,fallback,objective,"
                    "planned_accuracy,planned_slices,gpus," +
                    sim_report_csv_header() + ",error\n";
  for (const auto& r : records) {
    const bool has = r.plan.has_value();
    out += std::to_string(r.bin) + ',' + format_number(r.demand_rps) + ',' + format_number(r.predicted_rps) + ',' +
           format_number(r.planned_rps) + ',' + (r.feasible ? "1" : "0") + ',' + (r.fallback ? "1" : "0") + ',' +
           (has ? format_number(r.plan->objective) : "") + ',' +
           (has ? format_number(r.plan->config.system_accuracy) : "") + ',' +
           (has ? std::to_string(r.plan->config.total_slices) : "") + ',' + std::to_string(r.gpus) + ',' +
           sim_report_csv_row(r.report) + ',' + quote(r.error) + '\n';
  }
  return out;
}

std::string day_long_csv(std::span<const BinRecord> records) {
  std::string out = "bin_index,metric,value\n";
  for (const auto& r : records) {
    const auto b = std::to_string(r.bin);
    out += b + ",demand_rps," + fixed(r.demand_rps, 6) + '\n';
    out += b + ",slices_pct," + fixed(100.0 * r.report.slices_fraction, 6) + '\n';
    out += b + ",accuracy_drop_pct," + fixed(r.report.accuracy_drop_pct, 6) + '\n';
    out += b + ",violation_rate_pct," + fixed(100.0 * r.report.violation_rate, 6) + '\n';
  }
  return out;
}

std::string day_reports_json(std::span<const BinRecord> records, const AppSpec& app) {
  auto arr = ojson::array();
  for (const auto& r : records) {
    auto j = ojson::parse(sim_report_json(r.report, app));
    ojson row;
    row["bin_index"] = r.bin;
    row["error"] = r.error;
    row["report"] = j;
    arr.push_back(row);
  }
  return arr.dump(2) + "\n";
}

}  // namespace tessera
