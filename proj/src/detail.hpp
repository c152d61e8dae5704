#pragma once

// Helpers shared by derive(), validate() and the planner search. Every
// quantity the search compares against a constraint is computed by the same
// function validate() uses, so both agree to the last bit.

#include <span>
#include <vector>

#include "tessera/planner.hpp"

namespace tessera::detail {

struct TupleUse {
  std::size_t variant = 0;
  double latency = 0.0;
  double throughput = 0.0;
  int slices = 0;
  int count = 0;
};

struct TaskAggregate {
  double latency = 0.0;
  double capacity = 0.0;
  int slices = 0;
  double accuracy = 0.0;
  std::vector<double> factor;  // one per outgoing edge, in graph edge order
};

/// Aggregates the instances of one task; `uses` must be in instance-key order.
/// A task without instances has latency 0, the accuracy of its most accurate
/// variant and zero outgoing factors.
TaskAggregate aggregate_task(const AppSpec& app, TaskIndex t, std::span<const std::size_t> out_edges,
                             std::span<const TupleUse> uses);

/// Queueing-inclusive latency of a path: twice the slowest instance per task.
double path_latency(const Path& path, std::span<const double> task_latency);

inline double required_capacity(double demand, double slack) { return demand * (1.0 + slack); }

inline double objective(const AppSpec& app, double system_accuracy, int total_slices) {
  return app.alpha * system_accuracy - app.beta * static_cast<double>(total_slices);
}

/// Tolerance used when ranking objectives; values closer than this tie.
inline constexpr double kObjectiveTie = 1e-12;

}  // namespace tessera::detail

namespace tessera::detail {

/// The two-stage search behind plan() and plan_uninformed(). With `budgets`
/// set, every task is additionally held to its static latency and slice
/// budget.
PlanResult solve(const AppSpec& app, const ProfileTable& profile, const PlanRequest& request,
                 const SolverOptions& options, const TaskBudgets* budgets);

void check_request(const AppSpec& app, const PlanRequest& request);

}  // namespace tessera::detail
