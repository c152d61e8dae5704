#pragma once

#include <array>
#include <compare>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tessera/model.hpp"
#include "tessera/profiles.hpp"

namespace tessera {

/// Which optimisation features a planner may use.
struct SearchSpace {
  bool accuracy_scaling = true;      // A: any variant, not just the most accurate one
  bool spatial_partitioning = true;  // S: any segment, not just whole GPUs without MPS
  bool task_graph_informed = true;   // T: end-to-end budgets instead of static per-task ones

  std::string label() const;  // "Unopt", "A", "S+T", "A+S+T", ...
  /// Accepts "", "Unopt", "none" or any '+'-joined subset of A, S, T.
  static SearchSpace parse(std::string_view text);
  /// The eight spaces in report order: Unopt, T, A, A+T, S, S+T, A+S, A+S+T.
  static std::array<SearchSpace, 8> all();
  /// True if every feature enabled in `other` is also enabled here.
  bool includes(const SearchSpace& other) const;
  bool allows_segment(const SegmentType& s) const;
  auto operator<=>(const SearchSpace&) const = default;
};

struct PlanRequest {
  double demand_rps = 0.0;  // entry-task demand R
  int slices = 0;           // S_avail
  SearchSpace space;
  double slack = 0.05;
};

/// One instance type (t, v, s, b).
struct InstanceKey {
  TaskIndex task = 0;
  std::size_t variant = 0;
  SegmentType segment;
  int batch = 1;
  auto operator<=>(const InstanceKey&) const = default;
};

/// The decision map M(t,v,s,b); zero counts are never stored.
using Assignment = std::map<InstanceKey, int>;

/// Lexicographic order of assignments viewed as dense count vectors over
/// the instance-key order: at the first key where counts differ, the smaller
/// count is smaller.
std::strong_ordering compare_assignments(const Assignment& a, const Assignment& b);

ProfileKey profile_key(const AppSpec& app, const InstanceKey& key);

/// M together with every quantity derived from it.
struct Configuration {
  Assignment counts;
  std::vector<double> latency;         // slowest active instance per task
  std::vector<double> edge_factor;     // throughput-weighted factor per edge
  std::vector<double> demand;          // per-task demand
  std::vector<double> capacity;        // per-task summed instance throughput
  std::vector<int> slices;             // per-task compute slices
  std::vector<double> accuracy;        // throughput-weighted accuracy per task
  std::vector<double> path_accuracy;   // per path, in app.paths order
  double a_max = 1.0;
  double system_accuracy = 0.0;        // normalised by a_max
  int total_slices = 0;
  double objective = 0.0;              // alpha * system_accuracy - beta * total_slices
  std::vector<std::string> structural_issues;
};

/// Computes every intermediate from M alone. Throws ConfigError when M
/// references a profile entry that does not exist or holds a negative count.
Configuration derive(const Assignment& counts, const AppSpec& app, const ProfileTable& profile,
                     double demand_rps);

struct ConstraintVerdict {
  std::string constraint;  // latency | throughput | slices | accuracy | structure
  std::string subject;     // path, task or "system"
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;     // rhs - lhs for <=, lhs - rhs for >=
  bool passed = true;
};

struct ValidationReport {
  std::vector<ConstraintVerdict> verdicts;
  bool ok() const;
  /// Failed verdict with the most negative margin relative to its bound.
  std::optional<ConstraintVerdict> tightest_violation() const;
};

ValidationReport validate(const Configuration& config, const AppSpec& app,
                          const PlanRequest& request);

struct SolverOptions {
  int max_candidates = 512;            // candidate bundles kept per task and demand
  long exhaustive_limit = 1L << 17;    // enumerate every count vector below this size
  int max_count_per_tuple = 0;         // 0: derive the cap from the demand
  bool feasibility_only = false;       // stop at the first feasible configuration
  bool parallel = false;               // split the search at the first task (OpenMP)
};

struct SolverStats {
  long nodes = 0;
  bool exhaustive = true;   // every task used full enumeration of its bundles
  bool truncated = false;   // some candidate list hit max_candidates
  double wall_ms = 0.0;     // not serialised; outputs stay reproducible
};

struct PlanResult {
  Configuration config;
  double a_max = 1.0;
  bool feasible = false;
  double objective = 0.0;
  SolverStats stats;
  std::optional<ConstraintVerdict> binding;  // set when infeasible
  std::string diagnosis;
  // Static budgets used by task-graph-uninformed spaces (empty otherwise).
  std::vector<double> latency_budget_ms;
  std::vector<double> slice_budget;
};

/// Best configuration for the request's search space.
PlanResult plan(const AppSpec& app, const ProfileTable& profile, const PlanRequest& request,
                const SolverOptions& options = {});

struct TaskBudgets {
  std::vector<double> latency_ms;  // bound on 2 * slowest-instance latency
  std::vector<double> slices;
};

/// Static per-task budgets for task-graph-uninformed planning.
TaskBudgets static_budgets(const AppSpec& app, const ProfileTable& profile, int slices,
                           double demand_rps);

/// Task-graph-uninformed planning: each task is held to its static budgets.
PlanResult plan_uninformed(const AppSpec& app, const ProfileTable& profile,
                           const PlanRequest& request, const SolverOptions& options = {});

struct OracleCaps {
  int max_tasks = 2;
  int max_variants = 2;
  int max_segments = 2;
  int max_batches = 2;
  int max_count = 3;
};

/// Exhaustive search over every M within `caps`. Throws ConfigError when the
/// instance exceeds the caps.
PlanResult brute_force_oracle(const AppSpec& app, const ProfileTable& profile,
                              const PlanRequest& request, const OracleCaps& caps = {});

struct MaxDemandResult {
  double demand_rps = 0.0;
  int probes = 0;
  std::string diagnosis;
};

/// Largest entry demand (relative tolerance 1e-3) with a feasible plan.
MaxDemandResult max_demand(const AppSpec& app, const ProfileTable& profile, int slices,
                           const SearchSpace& space, double slack = 0.05,
                           const SolverOptions& options = {});

struct SweepRow {
  SearchSpace space;
  double max_demand_rps = 0.0;
  double pct_slices = 0.0;  // of the optimal plan at max demand
  double ratio = 0.0;       // max demand over the Unopt row's
  std::string error;
};

/// max_demand for every search space, in SearchSpace::all() order.
std::vector<SweepRow> sweep(const AppSpec& app, const ProfileTable& profile, int slices, double slack = 0.05,
                            const SolverOptions& options = {});

/// Serialisation of a plan result; field order is fixed.
std::string plan_to_json(const PlanResult& result, const AppSpec& app, const PlanRequest& request);

}  // namespace tessera
