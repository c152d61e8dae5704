#include <cmath>
#include <set>

#include "detail.hpp"

namespace tessera {

// Deliberately naive: every count vector is derived and validated from
// scratch, sharing nothing with the search beyond derive() and validate().
PlanResult brute_force_oracle(const AppSpec& app, const ProfileTable& profile, const PlanRequest& request,
                              const OracleCaps& caps) {
  detail::check_request(app, request);
  const auto& g = app.graph;
  if (static_cast<int>(g.size()) > caps.max_tasks)
    throw ConfigError("oracle limited to " + std::to_string(caps.max_tasks) + " tasks");

  std::vector<InstanceKey> keys;
  std::set<SegmentType> segments;
  std::set<int> batches;
  for (TaskIndex t = 0; t < g.size(); ++t) {
    const auto& task = g.tasks[t];
    std::set<std::size_t> variants;
    for (const auto& [key, e] : profile.entries()) {
      if (key.task != task.id) continue;
      std::size_t v = 0;
      while (v < task.variants.size() && task.variants[v].id != key.variant) ++v;
      if (v == task.variants.size()) continue;
      if (!request.space.accuracy_scaling && v != task.best_variant()) continue;
      if (!request.space.allows_segment(key.segment)) continue;
      keys.push_back({t, v, key.segment, key.batch});
      variants.insert(v);
      segments.insert(key.segment);
      batches.insert(key.batch);
    }
    if (static_cast<int>(variants.size()) > caps.max_variants)
      throw ConfigError("oracle limited to " + std::to_string(caps.max_variants) + " variants per task");
  }
  if (static_cast<int>(segments.size()) > caps.max_segments)
    throw ConfigError("oracle limited to " + std::to_string(caps.max_segments) + " segment types");
  if (static_cast<int>(batches.size()) > caps.max_batches)
    throw ConfigError("oracle limited to " + std::to_string(caps.max_batches) + " batch sizes");

  std::optional<TaskBudgets> budgets;
  if (!request.space.task_graph_informed)
    budgets = static_budgets(app, profile, request.slices, request.demand_rps);

  PlanResult best;
  best.a_max = app.max_accuracy();
  long visited = 0;
  Assignment m;
  auto consider = [&]() {
    ++visited;
    Configuration c = derive(m, app, profile, request.demand_rps);
    if (!validate(c, app, request).ok()) return;
    if (budgets) {
      for (TaskIndex t = 0; t < g.size(); ++t) {
        if (2.0 * c.latency[t] > budgets->latency_ms[t]) return;
        if (c.slices[t] > std::floor(budgets->slices[t] + 1e-9)) return;
      }
    }
    if (best.feasible) {
      if (c.objective < best.objective - detail::kObjectiveTie) return;
      if (c.objective <= best.objective + detail::kObjectiveTie) {
        if (c.total_slices > best.config.total_slices) return;
        if (c.total_slices == best.config.total_slices && compare_assignments(m, best.config.counts) >= 0)
          return;
      }
    }
    best.feasible = true;
    best.objective = c.objective;
    best.config = std::move(c);
  };
  auto rec = [&](auto&& self, std::size_t i, int slices) -> void {
    if (i == keys.size()) {
      consider();
      return;
    }
    const int s = keys[i].segment.slices();
    for (int c = 0; c <= caps.max_count && slices + c * s <= request.slices; ++c) {
      if (c > 0) m[keys[i]] = c;
      self(self, i + 1, slices + c * s);
    }
    m.erase(keys[i]);
  };
  rec(rec, 0, 0);

  best.stats.nodes = visited;
  if (!best.feasible) {
    best.config = derive({}, app, profile, request.demand_rps);
    best.diagnosis = "no assignment within the oracle caps is feasible";
  }
  if (budgets) {
    best.latency_budget_ms = budgets->latency_ms;
    best.slice_budget = budgets->slices;
  }
  return best;
}

}  // namespace tessera
