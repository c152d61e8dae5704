// Serial against OpenMP planning on the bundled applications.
#include <benchmark/benchmark.h>

#include <filesystem>
#include <map>
#include <string>

#include "tessera/model.hpp"
#include "tessera/planner.hpp"
#include "tessera/profiles.hpp"

namespace {

using namespace tessera;

struct Case {
  AppSpec app;
  ProfileTable profile;
};

const Case& bundled(const std::string& name) {
  static std::map<std::string, Case> cache;
  auto it = cache.find(name);
  if (it == cache.end()) {
    const std::filesystem::path dir = TESSERA_APPS_DIR;
    it = cache.emplace(name, Case{load_app(dir / (name + ".json")), load_profile(dir / (name + ".profile.csv"))})
             .first;
  }
  return it->second;
}

const char* const kApps[] = {"traffic", "social", "ar"};

void plan_app(benchmark::State& state, bool parallel) {
  const auto& c = bundled(kApps[state.range(0)]);
  const PlanRequest req{static_cast<double>(state.range(1)), 28, SearchSpace{}, 0.05};
  SolverOptions opts;
  opts.parallel = parallel;
  long nodes = 0;
  for (auto _ : state) {
    auto r = plan(c.app, c.profile, req, opts);
    nodes = r.stats.nodes;
    benchmark::DoNotOptimize(r);
  }
  state.SetLabel(kApps[state.range(0)]);
  state.counters["nodes"] = static_cast<double>(nodes);
}

void BM_PlanSerial(benchmark::State& state) { plan_app(state, false); }
void BM_PlanParallel(benchmark::State& state) { plan_app(state, true); }

void demands(benchmark::internal::Benchmark* b) {
  for (int app = 0; app < 3; ++app)
    for (int demand : {100, 300}) b->Args({app, demand});
  b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_PlanSerial)->Apply(demands);
BENCHMARK(BM_PlanParallel)->Apply(demands);

BENCHMARK_MAIN();
