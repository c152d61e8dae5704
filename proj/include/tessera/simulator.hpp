#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tessera/model.hpp"
#include "tessera/placement.hpp"
#include "tessera/planner.hpp"
#include "tessera/profiles.hpp"

namespace tessera {

enum class DropCause { none, deadline_infeasible, stale, no_capacity };
std::string_view to_string(DropCause c);

/// Fastest possible completion from the start of each task to the end of the
/// request: the task's best batch-1 latency plus the quickest way through its
/// successors, hops included.
std::vector<double> fastest_remaining_ms(const AppSpec& app, const ProfileTable& profile);

struct QueuedRequest {
  double deadline_ms = 0.0;
  double enqueued_ms = 0.0;  // arrival at the current task
  /// A full batch just launched without it and no other instance of the task
  /// could take it. Only then can the request be stale.
  bool left_behind = false;
};

struct DropDecision {
  bool drop = false;
  DropCause cause = DropCause::none;
};

DropDecision should_early_drop(const QueuedRequest& request, double now_ms, TaskIndex task,
                               std::span<const double> fastest_remaining, double staleness_ms);
DropDecision should_early_drop(const QueuedRequest& request, double now_ms, TaskIndex task,
                               const ProfileTable& profile, const AppSpec& app);

/// Violations charged for one dropped sub-request: the rounded-up sum of the
/// serving variant's outgoing factors, at least one.
int drop_weight(const AppSpec& app, TaskIndex task, std::size_t variant);

struct RootOutcome {
  bool completed = false;
  bool late = false;
};

struct ViolationStats {
  long completed = 0;
  long late = 0;
  long dropped_roots = 0;
  double drop_weight = 0.0;
  double rate = 0.0;  // (late + drop weight) / (completed + drop weight)
};

/// `drop_weights` holds one entry per dropped sub-request.
ViolationStats violation_accounting(std::span<const RootOutcome> roots, std::span<const double> drop_weights);

/// Mean of the per-leaf accuracy products, over the best achievable value.
std::optional<double> measured_accuracy(std::span<const double> leaf_products, double a_max);

enum class FanOut { rounded, poisson };
enum class Routing { shortest_queue, round_robin };

struct SimOptions {
  double duration_s = 60.0;
  double warmup_s = 10.0;
  std::uint64_t seed = 1;
  FanOut fan_out = FanOut::rounded;  // floor plus a Bernoulli remainder
  Routing routing = Routing::shortest_queue;
  bool early_drop = true;
  bool event_log = false;
  int slices_available = 0;  // for the reported fraction; 0 leaves it at 0
};

struct FactorSample {
  TaskIndex task = 0;
  std::size_t variant = 0;
  std::size_t edge = 0;
  long served = 0;
  long emitted = 0;
  double factor() const { return served > 0 ? static_cast<double>(emitted) / served : 0.0; }
};

struct SimReport {
  double offered_rps = 0.0;
  double duration_s = 0.0;
  long arrived = 0;  // roots arriving in the measured window
  long completed = 0;
  long dropped = 0;
  long late = 0;
  long drops_deadline = 0;  // sub-request drops by cause
  long drops_stale = 0;
  long drops_no_capacity = 0;
  double drop_weight = 0.0;
  double violation_rate = 0.0;
  std::optional<double> accuracy;  // normalised by a_max
  double accuracy_drop_pct = 0.0;
  int slices_used = 0;
  double slices_fraction = 0.0;
  int instances = 0;
  int unplaced = 0;
  double latency_p50_ms = 0.0;
  double latency_p99_ms = 0.0;
  std::size_t max_queue = 0;
  std::vector<double> task_rps;            // measured arrivals per task
  std::vector<double> predicted_task_rps;  // propagated from the configuration's factors
  std::vector<FactorSample> factors;
};

struct SimResult {
  SimReport report;
  std::string event_log;  // CSV, empty unless requested
};

/// Instance list in assignment order, one entry per counted instance; the
/// indices of a DeploymentPlan built from it refer to this list.
std::vector<InstanceKey> expand_instances(const Configuration& config);

/// Runs the configuration against Poisson arrivals at `rate_rps`. With a
/// deployment, instances it could not place do not serve.
SimResult simulate(const AppSpec& app, const ProfileTable& profile, const Configuration& config,
                   const DeploymentPlan* deployment, double rate_rps, const SimOptions& options = {});

inline constexpr std::string_view kEventLogHeader = "time_ms,event,request_id,task,instance,detail";

}  // namespace tessera
