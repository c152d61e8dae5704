#include "tessera/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <queue>

namespace tessera {

std::size_t Task::best_variant() const {
  std::size_t best = 0;
  for (std::size_t v = 1; v < variants.size(); ++v)
    if (variants[v].accuracy > variants[best].accuracy) best = v;
  return best;
}

TaskIndex TaskGraph::index_of(const std::string& id) const {
  for (TaskIndex t = 0; t < tasks.size(); ++t)
    if (tasks[t].id == id) return t;
  throw ConfigError("unknown task '" + id + "'");
}

std::vector<std::size_t> TaskGraph::in_edges(TaskIndex t) const {
  std::vector<std::size_t> out;
  for (std::size_t e = 0; e < edges.size(); ++e)
    if (edges[e].dst == t) out.push_back(e);
  return out;
}

std::vector<std::size_t> TaskGraph::out_edges(TaskIndex t) const {
  std::vector<std::size_t> out;
  for (std::size_t e = 0; e < edges.size(); ++e)
    if (edges[e].src == t) out.push_back(e);
  return out;
}

TaskIndex TaskGraph::entry() const {
  std::vector<bool> has_pred(tasks.size(), false);
  for (const auto& e : edges) has_pred[e.dst] = true;
  std::vector<TaskIndex> entries;
  for (TaskIndex t = 0; t < tasks.size(); ++t)
    if (!has_pred[t]) entries.push_back(t);
  if (entries.size() != 1) {
    std::string msg = "task graph must have exactly one entry task, found " +
                      std::to_string(entries.size());
    for (auto t : entries) msg += " '" + tasks[t].id + "'";
    throw StructuralError(msg);
  }
  return entries.front();
}

std::vector<TaskIndex> TaskGraph::topological_order() const {
  std::vector<std::size_t> indeg(tasks.size(), 0);
  for (const auto& e : edges) ++indeg[e.dst];
  std::priority_queue<TaskIndex, std::vector<TaskIndex>, std::greater<>> ready;
  for (TaskIndex t = 0; t < tasks.size(); ++t)
    if (indeg[t] == 0) ready.push(t);
  std::vector<TaskIndex> order;
  while (!ready.empty()) {
    TaskIndex t = ready.top();
    ready.pop();
    order.push_back(t);
    for (const auto& e : edges)
      if (e.src == t && --indeg[e.dst] == 0) ready.push(e.dst);
  }
  if (order.size() != tasks.size()) throw StructuralError("task graph contains a cycle");
  return order;
}

namespace {

// Three-colour DFS over the whole graph; returns the first back edge found.
std::optional<std::pair<TaskIndex, TaskIndex>> find_cycle_edge(const TaskGraph& g) {
  enum class Colour { white, grey, black };
  std::vector<Colour> colour(g.size(), Colour::white);
  std::optional<std::pair<TaskIndex, TaskIndex>> found;
  std::function<void(TaskIndex)> visit = [&](TaskIndex t) {
    colour[t] = Colour::grey;
    for (const auto& e : g.edges) {
      if (found) return;
      if (e.src != t) continue;
      if (colour[e.dst] == Colour::grey) {
        found = {t, e.dst};
        return;
      }
      if (colour[e.dst] == Colour::white) visit(e.dst);
    }
    colour[t] = Colour::black;
  };
  for (TaskIndex t = 0; t < g.size() && !found; ++t)
    if (colour[t] == Colour::white) visit(t);
  return found;
}

}  // namespace

void TaskGraph::validate() const {
  if (tasks.empty()) throw StructuralError("task graph has no tasks");
  for (TaskIndex t = 0; t < tasks.size(); ++t) {
    const auto& task = tasks[t];
    if (task.variants.empty()) throw StructuralError("task '" + task.id + "' has no variants");
    for (TaskIndex u = 0; u < t; ++u)
      if (tasks[u].id == task.id) throw StructuralError("duplicate task id '" + task.id + "'");
    for (const auto& v : task.variants)
      if (!(v.accuracy >= 0.0 && v.accuracy <= 1.0))
        throw StructuralError("variant '" + task.id + "/" + v.id + "' accuracy outside [0,1]");
  }
  for (const auto& e : edges) {
    if (e.src >= tasks.size() || e.dst >= tasks.size())
      throw StructuralError("edge references an unknown task");
    if (e.src == e.dst) throw StructuralError("self loop on task '" + tasks[e.src].id + "'");
    if (e.factor.size() != tasks[e.src].variants.size())
      throw StructuralError("edge " + tasks[e.src].id + " -> " + tasks[e.dst].id +
                            " needs one factor per variant of '" + tasks[e.src].id + "'");
    for (double f : e.factor)
      if (!(f >= 0.0) || !std::isfinite(f))
        throw StructuralError("edge " + tasks[e.src].id + " -> " + tasks[e.dst].id +
                              " has a negative or non-finite factor");
  }
  if (auto c = find_cycle_edge(*this))
    throw StructuralError("cycle through edge " + tasks[c->first].id + " -> " +
                          tasks[c->second].id);
  entry();
}

std::vector<Path> enumerate_paths(const TaskGraph& graph) {
  if (auto c = find_cycle_edge(graph))
    throw StructuralError("cycle through edge " + graph.tasks[c->first].id + " -> " +
                          graph.tasks[c->second].id);
  std::vector<Path> paths;
  Path current;
  std::function<void(TaskIndex)> walk = [&](TaskIndex t) {
    current.push_back(t);
    bool leaf = true;
    for (const auto& e : graph.edges) {
      if (e.src != t) continue;
      leaf = false;
      walk(e.dst);
    }
    if (leaf) paths.push_back(current);
    current.pop_back();
  };
  walk(graph.entry());
  std::sort(paths.begin(), paths.end(), [&](const Path& a, const Path& b) {
    return std::lexicographical_compare(
        a.begin(), a.end(), b.begin(), b.end(),
        [&](TaskIndex x, TaskIndex y) { return graph.tasks[x].id < graph.tasks[y].id; });
  });
  paths.erase(std::unique(paths.begin(), paths.end()), paths.end());
  return paths;
}

double incoming_demand(const TaskGraph& graph, TaskIndex t, std::span<const double> demand,
                       std::span<const double> edge_factors) {
  double sum = 0.0;
  for (std::size_t e = 0; e < graph.edges.size(); ++e)
    if (graph.edges[e].dst == t) sum += demand[graph.edges[e].src] * edge_factors[e];
  return sum;
}

std::vector<double> propagate_demand(const TaskGraph& graph, double entry_rps,
                                     std::span<const double> edge_factors) {
  if (edge_factors.size() != graph.edges.size())
    throw ConfigError("expected " + std::to_string(graph.edges.size()) + " edge factors, got " +
                      std::to_string(edge_factors.size()));
  for (std::size_t e = 0; e < edge_factors.size(); ++e)
    if (std::isnan(edge_factors[e]))
      throw ConfigError("missing factor for edge " + graph.tasks[graph.edges[e].src].id + " -> " +
                        graph.tasks[graph.edges[e].dst].id);
  std::vector<double> demand(graph.size(), 0.0);
  const TaskIndex entry = graph.entry();
  for (TaskIndex t : graph.topological_order())
    demand[t] = t == entry ? entry_rps : incoming_demand(graph, t, demand, edge_factors);
  return demand;
}

double path_accuracy(const Path& path, std::span<const double> task_accuracy) {
  double acc = 1.0;
  for (TaskIndex t : path) {
    if (t >= task_accuracy.size())
      throw ConfigError("no accuracy for task index " + std::to_string(t));
    acc *= task_accuracy[t];
  }
  return acc;
}

double system_accuracy(std::span<const Path> paths, std::span<const double> fractions,
                       std::span<const double> task_accuracy, double max_accuracy) {
  if (!(max_accuracy > 0.0)) throw ConfigError("maximum system accuracy must be positive");
  if (fractions.size() != paths.size()) throw ConfigError("one path fraction per path required");
  double weighted = 0.0;
  for (std::size_t p = 0; p < paths.size(); ++p)
    weighted += fractions[p] * path_accuracy(paths[p], task_accuracy);
  return weighted / max_accuracy;
}

void AppSpec::validate() const {
  graph.validate();
  if (!(slo_latency_ms > 0.0)) throw ConfigError("latency SLO must be positive");
  if (!(slo_accuracy > 0.0 && slo_accuracy <= 1.0))
    throw ConfigError("accuracy SLO must lie in (0, 1]");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("objective weights must be >= 0");
  if (staleness_ms < 0.0 || hop_latency_ms < 0.0)
    throw ConfigError("staleness and hop latency must be >= 0");
  if (paths.empty()) throw ConfigError("application has no paths");
  if (path_fractions.size() != paths.size())
    throw ConfigError("one path fraction per path required");
  double sum = 0.0;
  for (double f : path_fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("path fraction outside [0,1]");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("path fractions must sum to 1");
  std::vector<bool> covered(graph.size(), false);
  for (const auto& p : paths)
    for (TaskIndex t : p) covered.at(t) = true;
  for (TaskIndex t = 0; t < graph.size(); ++t)
    if (!covered[t]) throw ConfigError("task '" + graph.tasks[t].id + "' lies on no path");
}

std::size_t AppSpec::depth() const {
  std::size_t d = 0;
  for (const auto& p : paths) d = std::max(d, p.size());
  return d;
}

double AppSpec::effective_latency_budget_ms() const {
  return slo_latency_ms - static_cast<double>(depth()) * hop_latency_ms;
}

double AppSpec::max_accuracy() const {
  std::vector<double> best(graph.size());
  for (TaskIndex t = 0; t < graph.size(); ++t) best[t] = graph.tasks[t].best_accuracy();
  double weighted = 0.0;
  for (std::size_t p = 0; p < paths.size(); ++p)
    weighted += path_fractions[p] * path_accuracy(paths[p], best);
  return weighted;
}

}  // namespace tessera
