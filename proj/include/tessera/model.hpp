#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tessera/error.hpp"

namespace tessera {

using TaskIndex = std::size_t;
using Path = std::vector<TaskIndex>;

struct ModelVariant {
  std::string id;
  double accuracy = 1.0;
};

struct Task {
  std::string id;
  std::vector<ModelVariant> variants;

  /// Index of the most accurate variant (first one on ties).
  std::size_t best_variant() const;
  double best_accuracy() const { return variants[best_variant()].accuracy; }
};

/// Directed edge src -> dst. `factor[v]` is the expected number of requests
/// variant v of `src` emits along this edge per request it serves.
struct Edge {
  TaskIndex src = 0;
  TaskIndex dst = 0;
  std::vector<double> factor;
};

/// A DAG of inference tasks with a single entry task.
///
/// The struct is a plain value; `validate()` checks the structural
/// invariants and is called by every loader. Graph queries assume a valid
/// graph except `enumerate_paths`, which detects cycles on its own.
struct TaskGraph {
  std::vector<Task> tasks;
  std::vector<Edge> edges;

  std::size_t size() const { return tasks.size(); }
  TaskIndex index_of(const std::string& id) const;  // throws ConfigError
  std::vector<std::size_t> in_edges(TaskIndex t) const;
  std::vector<std::size_t> out_edges(TaskIndex t) const;
  TaskIndex entry() const;  // throws StructuralError unless exactly one
  /// Kahn order, ties broken by task index.
  std::vector<TaskIndex> topological_order() const;

  void validate() const;
};

struct AppSpec {
  std::string name;
  TaskGraph graph;
  std::vector<Path> paths;
  std::vector<double> path_fractions;
  double slo_latency_ms = 0.0;
  double slo_accuracy = 1.0;
  double alpha = 1.0;
  double beta = 0.0;
  double staleness_ms = 0.0;
  double hop_latency_ms = 0.0;

  void validate() const;
  /// Maximum number of tasks on any path.
  std::size_t depth() const;
  /// Latency budget left for inference once every hop on the deepest path
  /// is paid for.
  double effective_latency_budget_ms() const;
  /// System accuracy with every task at its most accurate variant.
  double max_accuracy() const;
};

/// Every entry-to-sink path, ordered lexicographically by task id.
std::vector<Path> enumerate_paths(const TaskGraph& graph);

/// Demand at every task for entry demand `entry_rps`. `edge_factors` is
/// aligned with `graph.edges`.
std::vector<double> propagate_demand(const TaskGraph& graph, double entry_rps,
                                     std::span<const double> edge_factors);

/// Demand arriving at `t` given the demand already computed for its
/// predecessors. Shared by `propagate_demand` and the planner search so both
/// round identically.
double incoming_demand(const TaskGraph& graph, TaskIndex t, std::span<const double> demand,
                       std::span<const double> edge_factors);

double path_accuracy(const Path& path, std::span<const double> task_accuracy);

double system_accuracy(std::span<const Path> paths, std::span<const double> fractions,
                       std::span<const double> task_accuracy, double max_accuracy);

AppSpec load_app(const std::filesystem::path& file);
AppSpec parse_app(const std::string& json_text);
std::string dump_app(const AppSpec& app);

}  // namespace tessera
