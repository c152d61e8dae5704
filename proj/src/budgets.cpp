#include <algorithm>
#include <cmath>
#include <limits>

#include "detail.hpp"

namespace tessera {

// Budgets come from the most accurate variant of every task over the whole
// profile, independent of the segment restriction, so that a larger search
// space never sees tighter budgets.
TaskBudgets static_budgets(const AppSpec& app, const ProfileTable& profile, int slices,
                           double demand_rps) {
  const auto& g = app.graph;
  const std::size_t n = g.size();
  std::vector<double> worst_latency(n, 0.0);
  std::vector<double> best_throughput(n, 0.0);
  std::vector<int> best_slices(n, 0);
  for (TaskIndex t = 0; t < n; ++t) {
    const auto& task = g.tasks[t];
    const auto& variant = task.variants[task.best_variant()].id;
    for (const auto& [key, e] : profile.entries()) {
      if (key.task != task.id || key.variant != variant) continue;
      worst_latency[t] = std::max(worst_latency[t], e.latency_ms);
      if (e.throughput_rps > best_throughput[t] ||
          (e.throughput_rps == best_throughput[t] && key.segment.slices() < best_slices[t])) {
        best_throughput[t] = e.throughput_rps;
        best_slices[t] = key.segment.slices();
      }
    }
  }

  TaskBudgets b;
  const double total = app.effective_latency_budget_ms();
  b.latency_ms.assign(n, std::numeric_limits<double>::infinity());
  for (const auto& p : app.paths) {
    double sum = 0.0;
    for (TaskIndex t : p) sum += worst_latency[t];
    for (TaskIndex t : p) {
      const double share = sum > 0.0 ? worst_latency[t] / sum : 1.0 / static_cast<double>(p.size());
      b.latency_ms[t] = std::min(b.latency_ms[t], total * share);
    }
  }

  std::vector<double> factors(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& src = g.tasks[g.edges[e].src];
    factors[e] = g.edges[e].factor[src.best_variant()];
  }
  const auto demand = propagate_demand(g, demand_rps, factors);
  std::vector<double> need(n, 0.0);
  double sum = 0.0;
  for (TaskIndex t = 0; t < n; ++t) {
    if (best_throughput[t] > 0.0) need[t] = demand[t] / best_throughput[t] * best_slices[t];
    sum += need[t];
  }
  b.slices.assign(n, 0.0);
  for (TaskIndex t = 0; t < n; ++t) {
    const double share = sum > 0.0 ? need[t] / sum : 1.0 / static_cast<double>(n);
    b.slices[t] = std::floor(slices * share + 1e-9);
  }
  return b;
}

PlanResult plan_uninformed(const AppSpec& app, const ProfileTable& profile, const PlanRequest& request,
                           const SolverOptions& options) {
  detail::check_request(app, request);
  const auto budgets = static_budgets(app, profile, request.slices, request.demand_rps);
  return detail::solve(app, profile, request, options, &budgets);
}

}  // namespace tessera
