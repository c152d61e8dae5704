#include <algorithm>
#include <cmath>
#include <limits>

#include "detail.hpp"
#include "tessera/planner.hpp"

namespace tessera {

// ---------------------------------------------------------------------------
// SearchSpace

std::string SearchSpace::label() const {
  std::string out;
  auto add = [&](bool on, const char* tag) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += tag;
  };
  add(accuracy_scaling, "A");
  add(spatial_partitioning, "S");
  add(task_graph_informed, "T");
  return out.empty() ? "Unopt" : out;
}

SearchSpace SearchSpace::parse(std::string_view text) {
  SearchSpace s{false, false, false};
  if (text.empty() || text == "Unopt" || text == "unopt" || text == "none") return s;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto pos = text.find('+', start);
    auto tok = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    if (tok == "A" || tok == "a") s.accuracy_scaling = true;
    else if (tok == "S" || tok == "s") s.spatial_partitioning = true;
    else if (tok == "T" || tok == "t") s.task_graph_informed = true;
    else throw ConfigError("unknown search-space feature '" + std::string(tok) + "'");
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return s;
}

std::array<SearchSpace, 8> SearchSpace::all() {
  return {{{false, false, false},
           {false, false, true},
           {true, false, false},
           {true, false, true},
           {false, true, false},
           {false, true, true},
           {true, true, false},
           {true, true, true}}};
}

bool SearchSpace::includes(const SearchSpace& o) const {
  return (accuracy_scaling || !o.accuracy_scaling) &&
         (spatial_partitioning || !o.spatial_partitioning) &&
         (task_graph_informed || !o.task_graph_informed);
}

bool SearchSpace::allows_segment(const SegmentType& s) const {
  return spatial_partitioning || (s.mig == MigProfile::g7 && s.mps == 1);
}

// ---------------------------------------------------------------------------

std::strong_ordering compare_assignments(const Assignment& a, const Assignment& b) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      // key present only in a: a has the larger count there
      return std::strong_ordering::greater;
    }
    if (ia == a.end() || ib->first < ia->first) return std::strong_ordering::less;
    if (ia->second != ib->second) return ia->second <=> ib->second;
    ++ia;
    ++ib;
  }
  return std::strong_ordering::equal;
}

ProfileKey profile_key(const AppSpec& app, const InstanceKey& key) {
  const auto& task = app.graph.tasks.at(key.task);
  return {task.id, task.variants.at(key.variant).id, key.segment, key.batch};
}

namespace detail {

TaskAggregate aggregate_task(const AppSpec& app, TaskIndex t, std::span<const std::size_t> out_edges,
                             std::span<const TupleUse> uses) {
  const auto& task = app.graph.tasks[t];
  TaskAggregate agg;
  agg.factor.assign(out_edges.size(), 0.0);
  double acc_sum = 0.0;
  std::size_t first = 0;
  bool one_variant = true, any = false;
  for (const auto& u : uses) {
    if (u.count <= 0) continue;
    if (!any) first = u.variant;
    any = true;
    one_variant = one_variant && u.variant == first;
    const double h = u.count * u.throughput;
    agg.capacity += h;
    acc_sum += h * task.variants[u.variant].accuracy;
    for (std::size_t i = 0; i < out_edges.size(); ++i)
      agg.factor[i] += app.graph.edges[out_edges[i]].factor[u.variant] * h;
    agg.slices += u.count * u.slices;
    agg.latency = std::max(agg.latency, u.latency);
  }
  if (agg.capacity > 0.0) {
    // A single variant keeps its accuracy exactly; the weighted mean could
    // be off by an ulp and break the A_obj = 1 identity.
    agg.accuracy = one_variant ? task.variants[first].accuracy : acc_sum / agg.capacity;
    for (auto& f : agg.factor) f /= agg.capacity;
  } else {
    agg.accuracy = task.best_accuracy();
  }
  return agg;
}

double path_latency(const Path& path, std::span<const double> task_latency) {
  double sum = 0.0;
  for (TaskIndex t : path) sum += 2.0 * task_latency[t];
  return sum;
}

}  // namespace detail

Configuration derive(const Assignment& counts, const AppSpec& app, const ProfileTable& profile,
                     double demand_rps) {
  const auto& g = app.graph;
  const std::size_t n = g.size();
  Configuration c;
  c.counts = counts;
  c.latency.assign(n, 0.0);
  c.capacity.assign(n, 0.0);
  c.slices.assign(n, 0);
  c.accuracy.assign(n, 0.0);
  c.edge_factor.assign(g.edges.size(), 0.0);

  std::vector<std::vector<detail::TupleUse>> uses(n);
  for (const auto& [key, count] : counts) {
    if (key.task >= n) throw ConfigError("assignment references task index " + std::to_string(key.task));
    if (count < 0) throw ConfigError("negative instance count");
    if (count == 0) continue;
    const auto pk = profile_key(app, key);
    const ProfileEntry* e = profile.find(pk);
    if (!e)
      throw ConfigError("assignment uses " + pk.task + "/" + pk.variant + "/" + pk.segment.label() +
                        "/b" + std::to_string(pk.batch) + " which is not in the profile");
    uses[key.task].push_back({key.variant, e->latency_ms, e->throughput_rps, key.segment.slices(), count});
  }

  for (TaskIndex t = 0; t < n; ++t) {
    auto out = g.out_edges(t);
    auto agg = detail::aggregate_task(app, t, out, uses[t]);
    c.latency[t] = agg.latency;
    c.capacity[t] = agg.capacity;
    c.slices[t] = agg.slices;
    c.accuracy[t] = agg.accuracy;
    for (std::size_t i = 0; i < out.size(); ++i) c.edge_factor[out[i]] = agg.factor[i];
  }
  c.demand = propagate_demand(g, demand_rps, c.edge_factor);
  for (TaskIndex t = 0; t < n; ++t)
    if (c.demand[t] > 0.0 && c.capacity[t] <= 0.0)
      c.structural_issues.push_back("task '" + g.tasks[t].id + "' has demand but no instances");

  c.a_max = app.max_accuracy();
  for (const auto& p : app.paths) c.path_accuracy.push_back(path_accuracy(p, c.accuracy));
  c.system_accuracy = system_accuracy(app.paths, app.path_fractions, c.accuracy, c.a_max);
  c.total_slices = 0;
  for (int s : c.slices) c.total_slices += s;
  c.objective = detail::objective(app, c.system_accuracy, c.total_slices);
  return c;
}

bool ValidationReport::ok() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.passed; });
}

std::optional<ConstraintVerdict> ValidationReport::tightest_violation() const {
  std::optional<ConstraintVerdict> worst;
  double worst_rel = std::numeric_limits<double>::infinity();
  for (const auto& v : verdicts) {
    if (v.passed) continue;
    const double rel = v.margin / std::max(std::abs(v.rhs), 1e-12);
    if (rel < worst_rel) {
      worst_rel = rel;
      worst = v;
    }
  }
  return worst;
}

ValidationReport validate(const Configuration& c, const AppSpec& app, const PlanRequest& request) {
  ValidationReport r;
  const auto& g = app.graph;
  const double budget = app.effective_latency_budget_ms();
  for (const auto& p : app.paths) {
    std::string name;
    for (auto t : p) name += (name.empty() ? "" : ">") + g.tasks[t].id;
    const double lhs = detail::path_latency(p, c.latency);
    r.verdicts.push_back({"latency", name, lhs, budget, budget - lhs, lhs <= budget});
  }
  for (TaskIndex t = 0; t < g.size(); ++t) {
    const double need = detail::required_capacity(c.demand[t], request.slack);
    r.verdicts.push_back(
        {"throughput", g.tasks[t].id, c.capacity[t], need, c.capacity[t] - need, c.capacity[t] >= need});
  }
  const double avail = request.slices;
  r.verdicts.push_back({"slices", "system", static_cast<double>(c.total_slices), avail,
                        avail - c.total_slices, c.total_slices <= request.slices});
  r.verdicts.push_back({"accuracy", "system", c.system_accuracy, app.slo_accuracy,
                        c.system_accuracy - app.slo_accuracy, c.system_accuracy >= app.slo_accuracy});
  for (const auto& issue : c.structural_issues)
    r.verdicts.push_back({"structure", issue, 0.0, 0.0, -1.0, false});
  return r;
}

}  // namespace tessera
