#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tessera/model.hpp"
#include "tessera/placement.hpp"
#include "tessera/planner.hpp"
#include "tessera/profiles.hpp"

namespace tessera::testing {

inline std::filesystem::path apps_dir() { return TESSERA_APPS_DIR; }

struct Bundled {
  AppSpec app;
  ProfileTable profile;
};

inline Bundled bundled(const std::string& name) {
  return {load_app(apps_dir() / (name + ".json")), load_profile(apps_dir() / (name + ".profile.csv"))};
}

struct TaskSpec {
  std::string id;
  std::vector<double> accuracy;
};

struct EdgeSpec {
  std::size_t src, dst;
  std::vector<double> factor;  // one per src variant
};

inline AppSpec make_app(const std::vector<TaskSpec>& tasks, const std::vector<EdgeSpec>& edges,
                        std::vector<double> fractions, double slo_ms, double slo_a, double beta,
                        double hop_ms = 0.0, double staleness_ms = 20.0) {
  AppSpec app;
  app.name = "test";
  for (const auto& t : tasks) {
    Task task{t.id, {}};
    for (std::size_t v = 0; v < t.accuracy.size(); ++v)
      task.variants.push_back({t.id + "_v" + std::to_string(v), t.accuracy[v]});
    app.graph.tasks.push_back(task);
  }
  for (const auto& e : edges) app.graph.edges.push_back({e.src, e.dst, e.factor});
  app.graph.validate();
  app.paths = enumerate_paths(app.graph);
  app.path_fractions = fractions.empty() ? std::vector<double>(app.paths.size(), 1.0 / app.paths.size())
                                         : std::move(fractions);
  app.slo_latency_ms = slo_ms;
  app.slo_accuracy = slo_a;
  app.alpha = 1.0;
  app.beta = beta;
  app.hop_latency_ms = hop_ms;
  app.staleness_ms = staleness_ms;
  app.validate();
  return app;
}

// Synthetic profile rows that keep latency increasing in batch.
inline void add_rows(ProfileTable& table, const AppSpec& app, std::span<const SegmentType> segments,
                     std::span<const int> batches, std::mt19937_64& rng, double gamma_s = 0.6,
                     double drop_probability = 0.0) {
  std::uniform_real_distribution<double> base(4.0, 60.0), jitter(0.9, 1.1), u(0.0, 1.0);
  for (const auto& task : app.graph.tasks)
    for (const auto& v : task.variants) {
      const double b0 = base(rng);
      for (const auto& s : segments) {
        const double seg = jitter(rng) * (1.0 + 0.15 * (s.mps - 1)) / std::pow(s.slices(), gamma_s);
        for (int b : batches) {
          if (u(rng) < drop_probability) continue;
          const double lat = b0 * seg * std::pow(b, 0.7);
          table.insert({task.id, v.id, s, b}, {lat, s.mps * b * 1000.0 / lat});
        }
      }
    }
}

struct Instance {
  AppSpec app;
  ProfileTable profile;
  PlanRequest request;
};

// Small enough for brute_force_oracle with its default caps.
inline Instance random_tiny(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };

  const int n_tasks = 1 + pick(2);
  std::vector<TaskSpec> tasks;
  for (int t = 0; t < n_tasks; ++t) {
    TaskSpec ts{"t" + std::to_string(t), {}};
    const int nv = 1 + pick(2);
    for (int v = 0; v < nv; ++v) ts.accuracy.push_back(0.5 + 0.5 * u(rng));
    tasks.push_back(ts);
  }
  std::vector<EdgeSpec> edges;
  if (n_tasks == 2) {
    EdgeSpec e{0, 1, {}};
    for (std::size_t v = 0; v < tasks[0].accuracy.size(); ++v)
      e.factor.push_back(std::vector<double>{0.5, 1.0, 1.5, 2.0, 3.0}[pick(5)]);
    edges.push_back(e);
  }
  const std::vector<double> betas{0.0, 0.01, 0.035, 0.1};
  // Draws are sequenced; argument evaluation order is unspecified.
  const double slo = 40.0 + 400.0 * u(rng);
  const double slo_a = 0.3 + 0.65 * u(rng);
  const double beta = betas[pick(4)];
  const double hop = pick(2) ? 0.0 : 5.0;
  auto app = make_app(tasks, edges, {}, slo, slo_a, beta, hop);

  const std::vector<SegmentType> pool{{MigProfile::g7, 1}, {MigProfile::g3, 1}, {MigProfile::g2, 2},
                                      {MigProfile::g1, 1}, {MigProfile::g1, 4}, {MigProfile::g4, 2},
                                      {MigProfile::g1_me, 1}};
  std::vector<SegmentType> segments;
  if (u(rng) < 0.6) segments.push_back(pool[0]);
  while (segments.size() < 2) {
    const auto s = pool[pick(static_cast<int>(pool.size()))];
    if (std::find(segments.begin(), segments.end(), s) == segments.end()) segments.push_back(s);
  }
  std::vector<int> batches{1, 2, 4, 8};
  std::shuffle(batches.begin(), batches.end(), rng);
  batches.resize(2);
  std::sort(batches.begin(), batches.end());

  Instance inst{app, {}, {}};
  add_rows(inst.profile, inst.app, segments, batches, rng, 0.6, 0.1);
  double median = 0.0;
  std::vector<double> h;
  for (const auto& [k, e] : inst.profile.entries()) h.push_back(e.throughput_rps);
  if (!h.empty()) {
    std::nth_element(h.begin(), h.begin() + h.size() / 2, h.end());
    median = h[h.size() / 2];
  }
  inst.request.demand_rps = std::max(1.0, median * (0.1 + 1.5 * u(rng)));
  inst.request.slices = 1 + pick(14);
  inst.request.space = SearchSpace::all()[pick(8)];
  inst.request.slack = pick(2) ? 0.05 : 0.0;
  // Every task needs a row for its most accurate variant or the instance is
  // rejected by the loaders' invariants.
  for (const auto& task : inst.app.graph.tasks) {
    const auto& v = task.variants[task.best_variant()].id;
    bool any = false;
    for (const auto& [k, e] : inst.profile.entries()) any |= k.task == task.id && k.variant == v;
    if (!any) {
      const double lat = 20.0 / std::pow(segments[0].slices(), 0.6);
      inst.profile.insert({task.id, v, segments[0], batches[0]}, {lat, segments[0].mps * batches[0] * 1000.0 / lat});
    }
  }
  return inst;
}

// A random DAG of up to `max_tasks` tasks over every segment and batch size,
// used where the oracle cannot follow.
inline Instance random_mixed(std::uint64_t seed, int max_tasks = 4) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  const int n = 1 + pick(max_tasks);
  std::vector<TaskSpec> tasks;
  for (int t = 0; t < n; ++t) {
    TaskSpec ts{"t" + std::to_string(t), {}};
    const int nv = 1 + pick(3);
    for (int v = 0; v < nv; ++v) ts.accuracy.push_back(0.4 + 0.6 * u(rng));
    tasks.push_back(ts);
  }
  std::vector<EdgeSpec> edges;
  for (int t = 1; t < n; ++t) {
    const int parents = 1 + (t > 1 ? pick(2) : 0);
    std::vector<int> used;
    for (int k = 0; k < parents; ++k) {
      const int src = pick(t);
      if (std::find(used.begin(), used.end(), src) != used.end()) continue;
      used.push_back(src);
      EdgeSpec e{static_cast<std::size_t>(src), static_cast<std::size_t>(t), {}};
      for (std::size_t v = 0; v < tasks[src].accuracy.size(); ++v) e.factor.push_back(0.5 + 2.5 * u(rng));
      edges.push_back(e);
    }
  }
  const double slo = 150.0 + 900.0 * u(rng);
  const double slo_a = 0.5 + 0.45 * u(rng);
  const double beta = 0.07 * u(rng);
  auto app = make_app(tasks, edges, {}, slo, slo_a, beta, 10.0);
  std::vector<SegmentType> segments;
  for (auto p : kMigProfiles)
    for (int k = 1; k <= kMaxMps; ++k) segments.push_back({p, k});
  const std::vector<int> batches{1, 2, 4, 8, 16, 32};
  Instance inst{app, {}, {}};
  add_rows(inst.profile, inst.app, segments, batches, rng, 0.4 + 0.4 * u(rng));
  const double x = u(rng);
  inst.request.demand_rps = 10.0 + 3000.0 * x * u(rng);
  inst.request.slices = 7 * (1 + pick(8));
  inst.request.space = SearchSpace::all()[pick(8)];
  inst.request.slack = 0.05;
  return inst;
}

// Exhaustive placement, independent of pack(): backtracking over every
// allowed footprint on every GPU of a candidate count.
struct PlacementOracle {
  struct Option {
    int start, width;
  };
  static std::vector<Option> options(MigProfile p) {
    switch (p) {
      case MigProfile::g1: return {{0, 1}, {1, 1}, {2, 1}, {3, 1}, {4, 1}, {5, 1}, {6, 1}};
      case MigProfile::g1_me: return {{0, 2}, {2, 2}, {4, 2}, {6, 1}};
      case MigProfile::g2: return {{0, 2}, {2, 2}, {4, 2}};
      case MigProfile::g3: return {{0, 4}, {4, 3}};
      case MigProfile::g4: return {{0, 4}};
      case MigProfile::g7: return {{0, 7}};
    }
    return {};
  }

  static bool place(const std::vector<MigProfile>& items, std::size_t i, std::vector<unsigned>& gpus) {
    if (i == items.size()) return true;
    bool tried_empty = false;
    for (auto& used : gpus) {
      // Empty GPUs are interchangeable.
      if (used == 0) {
        if (tried_empty) continue;
        tried_empty = true;
      }
      for (const auto& o : options(items[i])) {
        const unsigned mask = ((1u << o.width) - 1u) << o.start;
        if (used & mask) continue;
        used |= mask;
        if (place(items, i + 1, gpus)) {
          used &= ~mask;
          return true;
        }
        used &= ~mask;
      }
    }
    return false;
  }

  static int min_gpus(std::vector<MigProfile> items) {
    if (items.empty()) return 0;
    std::sort(items.begin(), items.end(), [](auto a, auto b) { return compute_slices(a) > compute_slices(b); });
    for (int k = 1;; ++k) {
      std::vector<unsigned> gpus(k, 0u);
      if (place(items, 0, gpus)) return k;
    }
  }
};

}  // namespace tessera::testing
