#include <algorithm>
#include <chrono>
#include <climits>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "detail.hpp"

namespace tessera {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kNoSlices = INT_MAX / 4;
// Bounds are computed with sums in a different order than the leaf checks,
// so they only prune with a little room to spare.
constexpr double kBoundSlack = 1e-9;

struct Tuple {
  InstanceKey key;
  double latency = 0.0;
  double throughput = 0.0;
  int slices = 0;
};

struct Bundle {
  std::vector<std::pair<std::uint32_t, int>> uses;  // (tuple, count), ascending tuple
  int slices = 0;
  double capacity = 0.0;
  double latency = 0.0;
  double accuracy = 0.0;
  std::vector<double> factor;  // per outgoing edge
};

// Dense lexicographic order of two bundles of the same task.
int compare_uses(const Bundle& a, const Bundle& b) {
  std::size_t i = 0, j = 0;
  while (i < a.uses.size() || j < b.uses.size()) {
    if (j == b.uses.size() || (i < a.uses.size() && a.uses[i].first < b.uses[j].first)) return 1;
    if (i == a.uses.size() || b.uses[j].first < a.uses[i].first) return -1;
    if (a.uses[i].second != b.uses[j].second) return a.uses[i].second < b.uses[j].second ? -1 : 1;
    ++i;
    ++j;
  }
  return 0;
}

// Unbounded knapsack over "at most k slices".
struct Knapsack {
  std::vector<double> cap;
  std::vector<double> lat;
  std::vector<int> pick;  // tuple added last, -1 when carried over from k-1
};

Knapsack knapsack(const std::vector<Tuple>& tuples, const std::vector<std::uint32_t>& allowed, int limit) {
  Knapsack k;
  k.cap.assign(limit + 1, 0.0);
  k.lat.assign(limit + 1, 0.0);
  k.pick.assign(limit + 1, -1);
  for (int s = 1; s <= limit; ++s) {
    k.cap[s] = k.cap[s - 1];
    k.lat[s] = k.lat[s - 1];
    for (auto u : allowed) {
      const auto& tu = tuples[u];
      if (tu.slices > s) continue;
      const double c = k.cap[s - tu.slices] + tu.throughput;
      const double l = std::max(k.lat[s - tu.slices], tu.latency);
      if (c > k.cap[s] || (c == k.cap[s] && k.pick[s] >= 0 && l < k.lat[s])) {
        k.cap[s] = c;
        k.lat[s] = l;
        k.pick[s] = static_cast<int>(u);
      }
    }
  }
  return k;
}

void reconstruct(const Knapsack& k, const std::vector<Tuple>& tuples, int s,
                 std::map<std::uint32_t, int>& counts) {
  while (s > 0) {
    if (k.pick[s] < 0) {
      --s;
      continue;
    }
    counts[static_cast<std::uint32_t>(k.pick[s])] += 1;
    s -= tuples[k.pick[s]].slices;
  }
}

// Smallest k in [from, limit] with cap[k] >= need, or -1.
int first_reaching(const std::vector<double>& cap, int from, int limit, double need) {
  if (from > limit) return -1;
  auto it = std::lower_bound(cap.begin() + from, cap.begin() + limit + 1, need);
  return it == cap.begin() + limit + 1 ? -1 : static_cast<int>(it - cap.begin());
}

struct TaskModel {
  TaskIndex task = 0;
  std::vector<std::size_t> out;
  std::vector<Tuple> tuples;  // sorted by instance key
  std::vector<double> min_factor;  // per outgoing edge, over allowed variants
  double min_latency = kInf;
  double best_accuracy = 1.0;
  int slice_limit = 0;
  std::vector<double> maxcap_any;

  bool exhaustive = true;
  std::vector<Bundle> all;

  // heuristic mode
  std::vector<double> levels;
  std::size_t variant_count = 0;
  std::vector<std::vector<int>> table_of;  // [level][variant slot] -> table, -1 if none
  std::vector<Knapsack> tables;
  std::vector<std::size_t> slot_variant;
};

struct Problem {
  const AppSpec* app = nullptr;
  PlanRequest request;
  SolverOptions options;
  const TaskBudgets* budgets = nullptr;
  std::vector<TaskIndex> order;
  TaskIndex entry = 0;
  std::vector<std::vector<std::size_t>> paths_of;
  double latency_budget = 0.0;
  double a_max = 1.0;
  std::vector<TaskModel> tasks;
  std::vector<double> min_edge_factor;
};

Bundle make_bundle(const Problem& pb, const TaskModel& tm, const std::map<std::uint32_t, int>& counts) {
  Bundle b;
  std::vector<detail::TupleUse> uses;
  for (auto [idx, c] : counts) {
    if (c <= 0) continue;
    b.uses.emplace_back(idx, c);
    const auto& tu = tm.tuples[idx];
    uses.push_back({tu.key.variant, tu.latency, tu.throughput, tu.slices, c});
  }
  auto agg = detail::aggregate_task(*pb.app, tm.task, tm.out, uses);
  b.slices = agg.slices;
  b.capacity = agg.capacity;
  b.latency = agg.latency;
  b.accuracy = agg.accuracy;
  b.factor = std::move(agg.factor);
  return b;
}

bool weakly_better(const Bundle& a, const Bundle& b) {
  if (a.slices > b.slices || a.accuracy < b.accuracy || a.latency > b.latency) return false;
  for (std::size_t i = 0; i < a.factor.size(); ++i)
    if (a.factor[i] > b.factor[i]) return false;
  return true;
}

bool dominance_order(const Bundle& a, const Bundle& b) {
  if (a.slices != b.slices) return a.slices < b.slices;
  if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
  if (a.latency != b.latency) return a.latency < b.latency;
  return compare_uses(a, b) < 0;
}

// Keeps bundles no other bundle beats. A tie on every metric goes to the
// lexicographically smaller bundle, matching the plan tie-break.
std::vector<Bundle> pareto(std::vector<Bundle> v) {
  std::sort(v.begin(), v.end(), dominance_order);
  std::vector<Bundle> kept;
  for (auto& b : v) {
    bool dominated = false;
    for (const auto& k : kept)
      if (weakly_better(k, b) && (k.slices < b.slices || compare_uses(k, b) < 0)) {
        dominated = true;
        break;
      }
    if (!dominated) kept.push_back(std::move(b));
  }
  return kept;
}

double score(const Problem& pb, const TaskModel& tm, const Bundle& b) {
  return pb.app->alpha * b.accuracy / tm.best_accuracy - pb.app->beta * b.slices;
}

// ---------------------------------------------------------------------------
// Stage 1: per-task models

void build_exhaustive(const Problem& pb, TaskModel& tm, const std::vector<int>& caps) {
  std::map<std::uint32_t, int> counts;
  const auto n = static_cast<std::uint32_t>(tm.tuples.size());
  auto rec = [&](auto&& self, std::uint32_t i, int slices) -> void {
    if (i == n) {
      tm.all.push_back(make_bundle(pb, tm, counts));
      return;
    }
    const int s = tm.tuples[i].slices;
    for (int c = 0; c <= caps[i] && slices + c * s <= tm.slice_limit; ++c) {
      if (c > 0) counts[i] = c;
      self(self, i + 1, slices + c * s);
    }
    counts.erase(i);
  };
  rec(rec, 0, 0);
}

void build_heuristic(TaskModel& tm) {
  // efficient tuples per variant: nothing else of the variant is at least as
  // cheap, as fast and as productive
  std::map<std::size_t, std::vector<std::uint32_t>> eff;
  for (std::uint32_t i = 0; i < tm.tuples.size(); ++i) {
    const auto& a = tm.tuples[i];
    bool dominated = false;
    for (std::uint32_t j = 0; j < tm.tuples.size() && !dominated; ++j) {
      if (j == i) continue;
      const auto& b = tm.tuples[j];
      if (b.key.variant != a.key.variant) continue;
      if (b.slices <= a.slices && b.throughput >= a.throughput && b.latency <= a.latency &&
          (b.slices < a.slices || b.throughput > a.throughput || b.latency < a.latency || j < i))
        dominated = true;
    }
    if (!dominated) eff[a.key.variant].push_back(i);
  }
  for (auto& [v, list] : eff) {
    std::sort(list.begin(), list.end(), [&](auto x, auto y) {
      return tm.tuples[x].latency != tm.tuples[y].latency ? tm.tuples[x].latency < tm.tuples[y].latency
                                                          : x < y;
    });
    for (auto u : list) tm.levels.push_back(tm.tuples[u].latency);
    tm.slot_variant.push_back(v);
  }
  std::sort(tm.levels.begin(), tm.levels.end());
  tm.levels.erase(std::unique(tm.levels.begin(), tm.levels.end()), tm.levels.end());
  tm.variant_count = tm.slot_variant.size();

  std::vector<std::size_t> prev_n(tm.variant_count, 0);
  std::vector<int> prev_table(tm.variant_count, -1);
  for (double level : tm.levels) {
    std::vector<int> row(tm.variant_count, -1);
    for (std::size_t slot = 0; slot < tm.variant_count; ++slot) {
      const auto& list = eff[tm.slot_variant[slot]];
      std::size_t n = 0;
      while (n < list.size() && tm.tuples[list[n]].latency <= level) ++n;
      if (n == 0) continue;
      if (n != prev_n[slot]) {
        std::vector<std::uint32_t> allowed(list.begin(), list.begin() + n);
        tm.tables.push_back(knapsack(tm.tuples, allowed, tm.slice_limit));
        prev_table[slot] = static_cast<int>(tm.tables.size()) - 1;
        prev_n[slot] = n;
      }
      row[slot] = prev_table[slot];
    }
    tm.table_of.push_back(std::move(row));
  }
}

TaskModel build_task(const Problem& pb, const ProfileTable& profile, TaskIndex t, double need_upper) {
  const auto& app = *pb.app;
  const auto& task = app.graph.tasks[t];
  const auto& space = pb.request.space;
  TaskModel tm;
  tm.task = t;
  tm.out = app.graph.out_edges(t);
  tm.best_accuracy = task.best_accuracy();
  tm.slice_limit = pb.request.slices;
  double lat_limit = pb.latency_budget;
  if (pb.budgets) {
    tm.slice_limit = std::min(tm.slice_limit, static_cast<int>(std::floor(pb.budgets->slices[t] + 1e-9)));
    lat_limit = std::min(lat_limit, pb.budgets->latency_ms[t]);
  }
  tm.slice_limit = std::max(tm.slice_limit, 0);

  std::map<std::string, std::size_t> variant_index;
  for (std::size_t v = 0; v < task.variants.size(); ++v) variant_index[task.variants[v].id] = v;
  const std::size_t best = task.best_variant();
  for (const auto& [key, entry] : profile.entries()) {
    if (key.task != task.id) continue;
    auto vit = variant_index.find(key.variant);
    if (vit == variant_index.end()) continue;
    if (!space.accuracy_scaling && vit->second != best) continue;
    if (!space.allows_segment(key.segment)) continue;
    if (key.segment.slices() > tm.slice_limit) continue;
    if (2.0 * entry.latency_ms > lat_limit) continue;
    tm.tuples.push_back({{t, vit->second, key.segment, key.batch},
                         entry.latency_ms, entry.throughput_rps, key.segment.slices()});
  }
  std::sort(tm.tuples.begin(), tm.tuples.end(), [](const Tuple& a, const Tuple& b) { return a.key < b.key; });

  tm.min_factor.assign(tm.out.size(), kInf);
  for (const auto& tu : tm.tuples) {
    tm.min_latency = std::min(tm.min_latency, tu.latency);
    for (std::size_t i = 0; i < tm.out.size(); ++i)
      tm.min_factor[i] = std::min(tm.min_factor[i], app.graph.edges[tm.out[i]].factor[tu.key.variant]);
  }
  for (auto& f : tm.min_factor)
    if (f == kInf) f = 0.0;

  std::vector<std::uint32_t> every(tm.tuples.size());
  std::iota(every.begin(), every.end(), 0u);
  tm.maxcap_any = knapsack(tm.tuples, every, tm.slice_limit).cap;

  // per-tuple count caps decide between full enumeration and the heuristic
  std::vector<int> caps(tm.tuples.size(), 0);
  long product = 1;
  for (std::size_t i = 0; i < tm.tuples.size(); ++i) {
    const auto& tu = tm.tuples[i];
    int cap = 0;
    if (need_upper > 0.0) {
      if (pb.options.max_count_per_tuple > 0) cap = pb.options.max_count_per_tuple;
      else cap = static_cast<int>(std::min(1e6, std::ceil(need_upper / tu.throughput))) + 1;
      cap = std::min(cap, tm.slice_limit / tu.slices);
    }
    caps[i] = cap;
    if (product <= pb.options.exhaustive_limit) product *= cap + 1;
  }
  tm.exhaustive = product <= pb.options.exhaustive_limit;
  if (tm.exhaustive) build_exhaustive(pb, tm, caps);
  else build_heuristic(tm);
  return tm;
}

// ---------------------------------------------------------------------------
// Stage 2: branch and bound

struct CandidateList {
  std::vector<Bundle> bundles;          // dominance order
  std::vector<std::uint32_t> visit;     // search order
};

struct Incumbent {
  bool found = false;
  double objective = -kInf;
  int slices = 0;
  std::vector<Bundle> chosen;  // by task index
};

int compare_chosen(const std::vector<Bundle>& a, const std::vector<Bundle>& b) {
  for (std::size_t t = 0; t < a.size(); ++t)
    if (int c = compare_uses(a[t], b[t]); c != 0) return c;
  return 0;
}

class Searcher {
 public:
  explicit Searcher(const Problem& pb) : pb_(pb), cache_(pb.tasks.size()) {
    const auto n = pb.app->graph.size();
    chosen_.assign(n, nullptr);
    demand_.assign(n, 0.0);
    latency_.assign(n, 0.0);
    accuracy_.assign(n, 0.0);
    for (TaskIndex t = 0; t < n; ++t) accuracy_[t] = pb.tasks[t].best_accuracy;
    edge_factor_.assign(pb.app->graph.edges.size(), 0.0);
    lower_demand_.assign(n, 0.0);
  }

  // Full search from the first task.
  void run() { dfs(0); }

  // Root candidates, for splitting the search.
  const CandidateList& root_candidates(bool& viable) {
    viable = bounds_ok(0);
    const TaskIndex t = pb_.order[0];
    return candidates(t, detail::required_capacity(pb_.request.demand_rps, pb_.request.slack));
  }

  // Search the subtree below one root candidate.
  void run_subtree(std::uint32_t index) {
    const TaskIndex t = pb_.order[0];
    demand_[t] = pb_.request.demand_rps;
    const auto& cl = candidates(t, detail::required_capacity(demand_[t], pb_.request.slack));
    if (!bounds_ok(0)) return;
    ++nodes_;
    const Bundle& b = cl.bundles[index];
    if (b.latency > latency_room(t) || b.slices > pb_.request.slices) return;
    try_candidate(0, t, b);
  }

  // Start another subtree from a known incumbent, keeping the candidate cache.
  void restart(const Incumbent& seed) {
    best_ = seed;
    stop_ = false;
  }

  const Incumbent& best() const { return best_; }
  long nodes() const { return nodes_; }
  bool truncated() const { return truncated_; }

 private:
  const CandidateList& candidates(TaskIndex t, double need) {
    auto& cache = cache_[t];
    auto it = cache.find(need);
    if (it != cache.end()) return it->second;
    const auto& tm = pb_.tasks[t];
    CandidateList cl;
    if (need <= 0.0) {
      cl.bundles.push_back(make_bundle(pb_, tm, {}));
    } else if (tm.exhaustive) {
      std::vector<Bundle> ok;
      for (const auto& b : tm.all)
        if (b.capacity >= need) ok.push_back(b);
      cl.bundles = pareto(std::move(ok));
    } else {
      cl.bundles = heuristic(tm, need);
    }
    if (static_cast<int>(cl.bundles.size()) > pb_.options.max_candidates) {
      truncated_ = true;
      truncate(tm, cl.bundles);
    }
    cl.visit.resize(cl.bundles.size());
    std::iota(cl.visit.begin(), cl.visit.end(), 0u);
    std::vector<double> sc(cl.bundles.size());
    for (std::size_t i = 0; i < sc.size(); ++i) sc[i] = score(pb_, tm, cl.bundles[i]);
    std::stable_sort(cl.visit.begin(), cl.visit.end(), [&](auto a, auto b) { return sc[a] > sc[b]; });
    return cache.emplace(need, std::move(cl)).first->second;
  }

  // Keeps the cheapest half and the best-scoring rest.
  void truncate(const TaskModel& tm, std::vector<Bundle>& v) const {
    const std::size_t keep = pb_.options.max_candidates;
    const std::size_t cheap = keep / 2;
    std::vector<std::size_t> idx(v.size() - cheap);
    std::iota(idx.begin(), idx.end(), cheap);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](auto a, auto b) { return score(pb_, tm, v[a]) > score(pb_, tm, v[b]); });
    idx.resize(keep - cheap);
    std::sort(idx.begin(), idx.end());
    std::vector<Bundle> out(std::make_move_iterator(v.begin()), std::make_move_iterator(v.begin() + cheap));
    for (auto i : idx) out.push_back(std::move(v[i]));
    v = std::move(out);
  }

  std::vector<Bundle> heuristic(const TaskModel& tm, double need) const {
    struct Light {
      int slices;
      double acc;
      double lat;
      int ta, ka, tb, kb;
    };
    const auto& g = pb_.app->graph;
    const auto& task = g.tasks[tm.task];
    const std::size_t nout = tm.out.size();
    std::vector<Light> lights;
    std::vector<double> fac;
    auto add = [&](std::size_t va, int ta, int ka, std::size_t vb, int tb, int kb) {
      const double ca = tm.tables[ta].cap[ka];
      const double cb = tb >= 0 ? tm.tables[tb].cap[kb] : 0.0;
      const double c = ca + cb;
      const double acc = (ca * task.variants[va].accuracy + cb * task.variants[vb].accuracy) / c;
      double lat = tm.tables[ta].lat[ka];
      if (tb >= 0) lat = std::max(lat, tm.tables[tb].lat[kb]);
      lights.push_back({ka + (tb >= 0 ? kb : 0), acc, lat, ta, ka, tb, kb});
      for (std::size_t i = 0; i < nout; ++i) {
        const auto& f = g.edges[tm.out[i]].factor;
        fac.push_back((ca * f[va] + cb * f[vb]) / c);
      }
    };
    const int limit = tm.slice_limit;
    for (const auto& row : tm.table_of) {
      for (std::size_t a = 0; a < tm.variant_count; ++a) {
        const int ta = row[a];
        if (ta < 0) continue;
        const auto& A = tm.tables[ta];
        const int single = first_reaching(A.cap, 1, limit, need);
        if (single > 0) add(tm.slot_variant[a], ta, single, tm.slot_variant[a], -1, 0);
        for (std::size_t b = 0; b < tm.variant_count; ++b) {
          const int tb = row[b];
          if (b == a || tb < 0) continue;
          const auto& B = tm.tables[tb];
          const int kmax = single > 0 ? single - 1 : limit - 1;
          for (int k = 1; k <= kmax; ++k) {
            if (A.cap[k] <= A.cap[k - 1]) continue;
            const int kb = first_reaching(B.cap, 1, limit - k, need - A.cap[k]);
            if (kb < 0) continue;
            add(tm.slot_variant[a], ta, k, tm.slot_variant[b], tb, kb);
          }
        }
      }
    }

    std::vector<std::uint32_t> idx(lights.size());
    std::iota(idx.begin(), idx.end(), 0u);
    std::sort(idx.begin(), idx.end(), [&](auto x, auto y) {
      const auto &p = lights[x], &q = lights[y];
      if (p.slices != q.slices) return p.slices < q.slices;
      if (p.acc != q.acc) return p.acc > q.acc;
      if (p.lat != q.lat) return p.lat < q.lat;
      return x < y;
    });
    std::vector<std::uint32_t> kept;
    for (auto i : idx) {
      const auto& p = lights[i];
      bool dominated = false;
      for (auto j : kept) {
        const auto& q = lights[j];
        if (q.slices > p.slices || q.acc < p.acc || q.lat > p.lat) continue;
        bool ok = true;
        for (std::size_t e = 0; e < nout && ok; ++e) ok = fac[j * nout + e] <= fac[i * nout + e];
        if (ok) {
          dominated = true;
          break;
        }
      }
      if (!dominated) kept.push_back(i);
    }

    std::vector<Bundle> out;
    out.reserve(kept.size());
    for (auto i : kept) {
      const auto& p = lights[i];
      std::map<std::uint32_t, int> counts;
      reconstruct(tm.tables[p.ta], tm.tuples, p.ka, counts);
      if (p.tb >= 0) reconstruct(tm.tables[p.tb], tm.tuples, p.kb, counts);
      auto b = make_bundle(pb_, tm, counts);
      if (b.capacity >= need) out.push_back(std::move(b));
    }
    return pareto(std::move(out));
  }

  int lower_slices(const TaskModel& tm, double need) const {
    if (need <= 0.0) return 0;
    const int k = first_reaching(tm.maxcap_any, 0, tm.slice_limit, need);
    return k < 0 ? kNoSlices : k;
  }

  // Bounds for the node whose first `depth` tasks (in topological order) are
  // assigned. Returns false when the subtree cannot hold a feasible or
  // improving configuration.
  bool bounds_ok(std::size_t depth) {
    const auto& g = pb_.app->graph;
    const auto n = pb_.order.size();
    auto assigned = [&](TaskIndex t) { return chosen_[t] != nullptr; };
    long slices = used_;
    for (std::size_t d = depth; d < n; ++d) {
      const TaskIndex t = pb_.order[d];
      double r = 0.0;
      if (t == pb_.entry) {
        r = pb_.request.demand_rps;
      } else {
        for (std::size_t e = 0; e < g.edges.size(); ++e) {
          if (g.edges[e].dst != t) continue;
          const TaskIndex s = g.edges[e].src;
          r += (assigned(s) ? demand_[s] : lower_demand_[s]) *
               (assigned(s) ? edge_factor_[e] : pb_.min_edge_factor[e]);
        }
      }
      lower_demand_[t] = r;
      slices += lower_slices(pb_.tasks[t], detail::required_capacity(r, pb_.request.slack));
      if (slices > pb_.request.slices) return false;
    }
    for (const auto& p : pb_.app->paths) {
      double lat = 0.0;
      for (TaskIndex t : p) {
        if (assigned(t)) lat += 2.0 * latency_[t];
        else if (lower_demand_[t] > 0.0) lat += 2.0 * pb_.tasks[t].min_latency;
      }
      if (lat > pb_.latency_budget + kBoundSlack) return false;
    }
    const double acc_ub =
        system_accuracy(pb_.app->paths, pb_.app->path_fractions, accuracy_, pb_.a_max);
    if (acc_ub < pb_.app->slo_accuracy - kBoundSlack) return false;
    if (best_.found && !pb_.options.feasibility_only) {
      const double bound = detail::objective(*pb_.app, acc_ub, static_cast<int>(slices));
      if (bound < best_.objective - kBoundSlack) return false;
    }
    return true;
  }

  // Largest L̂ the task at `t` may take given the rest of each of its paths.
  double latency_room(TaskIndex t) const {
    double room = kInf;
    for (auto p : pb_.paths_of[t]) {
      double rest = 0.0;
      for (TaskIndex u : pb_.app->paths[p]) {
        if (u == t) continue;
        if (chosen_[u]) rest += 2.0 * latency_[u];
        else if (lower_demand_[u] > 0.0) rest += 2.0 * pb_.tasks[u].min_latency;
      }
      room = std::min(room, (pb_.latency_budget - rest) / 2.0);
    }
    return room + kBoundSlack;
  }

  void dfs(std::size_t depth) {
    if (stop_) return;
    ++nodes_;
    const auto& g = pb_.app->graph;
    if (depth == pb_.order.size()) {
      leaf();
      return;
    }
    const TaskIndex t = pb_.order[depth];
    demand_[t] = t == pb_.entry ? pb_.request.demand_rps
                                : incoming_demand(g, t, demand_, edge_factor_);
    if (!bounds_ok(depth)) return;
    const auto& cl = candidates(t, detail::required_capacity(demand_[t], pb_.request.slack));
    const double room = latency_room(t);
    for (auto i : cl.visit) {
      const Bundle& b = cl.bundles[i];
      if (b.latency > room) continue;
      if (used_ + b.slices > pb_.request.slices) continue;
      try_candidate(depth, t, b);
      if (stop_) return;
    }
  }

  void try_candidate(std::size_t depth, TaskIndex t, const Bundle& b) {
    const auto& tm = pb_.tasks[t];
    chosen_[t] = &b;
    latency_[t] = b.latency;
    accuracy_[t] = b.accuracy;
    for (std::size_t i = 0; i < tm.out.size(); ++i) edge_factor_[tm.out[i]] = b.factor[i];
    used_ += b.slices;
    dfs(depth + 1);
    used_ -= b.slices;
    chosen_[t] = nullptr;
    latency_[t] = 0.0;
    accuracy_[t] = tm.best_accuracy;
  }

  void leaf() {
    const auto& app = *pb_.app;
    if (used_ > pb_.request.slices) return;
    for (const auto& p : app.paths)
      if (detail::path_latency(p, latency_) > pb_.latency_budget) return;
    const double acc = system_accuracy(app.paths, app.path_fractions, accuracy_, pb_.a_max);
    if (!(acc >= app.slo_accuracy)) return;
    const double obj = detail::objective(app, acc, used_);
    if (best_.found) {
      if (obj < best_.objective - detail::kObjectiveTie) return;
      if (obj <= best_.objective + detail::kObjectiveTie) {
        if (used_ > best_.slices) return;
        if (used_ == best_.slices && compare_with_best() >= 0) return;
      }
    }
    best_.found = true;
    best_.objective = obj;
    best_.slices = used_;
    best_.chosen.clear();
    for (auto* b : chosen_) best_.chosen.push_back(*b);
    if (pb_.options.feasibility_only) stop_ = true;
  }

  int compare_with_best() const {
    for (std::size_t t = 0; t < chosen_.size(); ++t)
      if (int c = compare_uses(*chosen_[t], best_.chosen[t]); c != 0) return c;
    return 0;
  }

  const Problem& pb_;
  std::vector<std::map<double, CandidateList>> cache_;
  std::vector<const Bundle*> chosen_;
  std::vector<double> demand_, latency_, accuracy_, edge_factor_, lower_demand_;
  int used_ = 0;
  long nodes_ = 0;
  bool truncated_ = false;
  bool stop_ = false;
  Incumbent best_;
};

bool better(const Incumbent& a, const Incumbent& b) {
  if (!a.found) return false;
  if (!b.found) return true;
  if (a.objective > b.objective + detail::kObjectiveTie) return true;
  if (a.objective < b.objective - detail::kObjectiveTie) return false;
  if (a.slices != b.slices) return a.slices < b.slices;
  return compare_chosen(a.chosen, b.chosen) < 0;
}

Problem make_problem(const AppSpec& app, const ProfileTable& profile, const PlanRequest& request,
                     const SolverOptions& options, const TaskBudgets* budgets) {
  Problem pb;
  pb.app = &app;
  pb.request = request;
  pb.options = options;
  pb.budgets = budgets;
  const auto& g = app.graph;
  pb.order = g.topological_order();
  pb.entry = g.entry();
  pb.latency_budget = app.effective_latency_budget_ms();
  pb.a_max = app.max_accuracy();
  pb.paths_of.assign(g.size(), {});
  for (std::size_t p = 0; p < app.paths.size(); ++p)
    for (TaskIndex t : app.paths[p]) pb.paths_of[t].push_back(p);

  // loosest demand each task could see, for the count caps
  std::vector<double> max_factor(g.edges.size(), 0.0);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& task = g.tasks[g.edges[e].src];
    for (std::size_t v = 0; v < task.variants.size(); ++v)
      if (request.space.accuracy_scaling || v == task.best_variant())
        max_factor[e] = std::max(max_factor[e], g.edges[e].factor[v]);
  }
  const auto upper = propagate_demand(g, request.demand_rps, max_factor);
  for (TaskIndex t = 0; t < g.size(); ++t)
    pb.tasks.push_back(build_task(pb, profile, t, detail::required_capacity(upper[t], request.slack)));
  pb.min_edge_factor.assign(g.edges.size(), 0.0);
  for (const auto& tm : pb.tasks)
    for (std::size_t i = 0; i < tm.out.size(); ++i) pb.min_edge_factor[tm.out[i]] = tm.min_factor[i];
  return pb;
}

std::string path_name(const AppSpec& app, const Path& p) {
  std::string name;
  for (auto t : p) name += (name.empty() ? "" : ">") + app.graph.tasks[t].id;
  return name;
}

// Cheap necessary conditions; explains most infeasible requests.
std::optional<ConstraintVerdict> quick_diagnosis(const Problem& pb) {
  const auto& app = *pb.app;
  const auto& g = app.graph;
  const auto& req = pb.request;
  std::vector<double> lower(g.size(), 0.0);
  for (TaskIndex t : pb.order)
    lower[t] = t == pb.entry ? req.demand_rps : incoming_demand(g, t, lower, pb.min_edge_factor);
  for (TaskIndex t : pb.order) {
    const auto& tm = pb.tasks[t];
    const double need = detail::required_capacity(lower[t], req.slack);
    if (need > 0.0 && tm.tuples.empty())
      return ConstraintVerdict{"throughput", g.tasks[t].id, 0.0, need, -need, false};
  }
  for (const auto& p : app.paths) {
    double lat = 0.0;
    for (TaskIndex t : p)
      if (lower[t] > 0.0) lat += 2.0 * pb.tasks[t].min_latency;
    if (lat > pb.latency_budget)
      return ConstraintVerdict{"latency", path_name(app, p), lat, pb.latency_budget, pb.latency_budget - lat,
                               false};
  }
  long total = 0;
  for (TaskIndex t : pb.order) {
    const auto& tm = pb.tasks[t];
    const double need = detail::required_capacity(lower[t], req.slack);
    if (need <= 0.0) continue;
    const double most = tm.maxcap_any.back();
    if (most < need) return ConstraintVerdict{"throughput", g.tasks[t].id, most, need, most - need, false};
    total += first_reaching(tm.maxcap_any, 0, tm.slice_limit, need);
  }
  if (total > req.slices)
    return ConstraintVerdict{"slices", "system", static_cast<double>(total), static_cast<double>(req.slices),
                             static_cast<double>(req.slices - total), false};
  return std::nullopt;
}

Incumbent search(const Problem& pb, SolverStats& stats) {
  if (!pb.options.parallel) {
    Searcher s(pb);
    s.run();
    stats.nodes = s.nodes();
    stats.truncated = s.truncated();
    return s.best();
  }
  Searcher root(pb);
  bool viable = false;
  const auto& cl = root.root_candidates(viable);
  stats.nodes = 1;
  stats.truncated = root.truncated();
  if (!viable) return {};
  const auto count = static_cast<long>(cl.bundles.size());
  if (count == 0) return {};
  // The best-scored subtree runs first so the others can prune against it.
  root.run_subtree(cl.visit[0]);
  Incumbent shared = root.best();
  stats.nodes += root.nodes();
  stats.truncated = stats.truncated || root.truncated();
  if (pb.options.feasibility_only && shared.found) return shared;
  std::exception_ptr error;
#pragma omp parallel
  {
    Searcher s(pb);  // one candidate cache per thread
#pragma omp for schedule(dynamic, 1)
    for (long i = 1; i < count; ++i) {
      try {
        Incumbent seed;
#pragma omp critical(tessera_incumbent)
        seed = shared;
        if (pb.options.feasibility_only && seed.found) continue;
        s.restart(seed);
        s.run_subtree(cl.visit[i]);
#pragma omp critical(tessera_incumbent)
        if (better(s.best(), shared)) shared = s.best();
      } catch (...) {
#pragma omp critical(tessera_error)
        error = std::current_exception();
      }
    }
#pragma omp critical(tessera_incumbent)
    {
      stats.nodes += s.nodes();
      stats.truncated = stats.truncated || s.truncated();
    }
  }
  if (error) std::rethrow_exception(error);
  return shared;
}

}  // namespace

namespace detail {

void check_request(const AppSpec& app, const PlanRequest& request) {
  if (!(request.demand_rps >= 0.0) || !std::isfinite(request.demand_rps))
    throw ConfigError("demand must be a finite non-negative rate");
  if (request.slices < 0) throw ConfigError("available slices must be non-negative");
  if (!(request.slack >= 0.0)) throw ConfigError("slack must be non-negative");
  app.validate();
}

namespace {

// The diagnosis re-solve drops the accuracy floor to zero, which a loaded
// application may not declare, so validation happens once in solve().
PlanResult solve_checked(const AppSpec& app, const ProfileTable& profile, const PlanRequest& request,
                         const SolverOptions& options, const TaskBudgets* budgets) {
  const auto start = std::chrono::steady_clock::now();
  const Problem pb = make_problem(app, profile, request, options, budgets);

  PlanResult result;
  result.a_max = pb.a_max;
  for (const auto& tm : pb.tasks) result.stats.exhaustive = result.stats.exhaustive && tm.exhaustive;
  if (budgets) {
    result.latency_budget_ms = budgets->latency_ms;
    result.slice_budget = budgets->slices;
  }

  Incumbent best;
  auto quick = quick_diagnosis(pb);
  if (!quick) best = search(pb, result.stats);

  if (best.found) {
    Assignment m;
    for (TaskIndex t = 0; t < best.chosen.size(); ++t)
      for (auto [idx, c] : best.chosen[t].uses) m[pb.tasks[t].tuples[idx].key] = c;
    result.config = derive(m, app, profile, request.demand_rps);
    const auto report = validate(result.config, app, request);
    if (!report.ok()) throw std::logic_error("planner produced a configuration that fails validation");
    result.feasible = true;
    result.objective = result.config.objective;
  } else {
    result.config = derive({}, app, profile, request.demand_rps);
    result.feasible = false;
    if (quick) {
      result.binding = quick;
    } else if (!options.feasibility_only && app.slo_accuracy > 0.0) {
      // Would the request be feasible without the accuracy floor?
      AppSpec relaxed = app;
      relaxed.slo_accuracy = 0.0;
      relaxed.alpha = 1.0;
      relaxed.beta = 0.0;
      auto r = solve_checked(relaxed, profile, request, options, budgets);
      result.stats.nodes += r.stats.nodes;
      if (r.feasible) {
        const double a = r.config.system_accuracy;
        result.binding = ConstraintVerdict{"accuracy", "system", a, app.slo_accuracy, a - app.slo_accuracy, false};
      } else {
        result.binding = r.binding;
      }
    }
    if (!result.binding) {
      result.binding = ConstraintVerdict{"slices", "system", static_cast<double>(request.slices),
                                         static_cast<double>(request.slices), 0.0, false};
      result.diagnosis = "no configuration meets the latency budget and demand within the available slices";
    }
    if (result.diagnosis.empty()) {
      const auto& b = *result.binding;
      result.diagnosis = b.constraint + " constraint on " + b.subject + " cannot be met (" +
                         format_number(b.lhs) + " vs bound " + format_number(b.rhs) + ")";
    }
  }
  result.stats.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace

PlanResult solve(const AppSpec& app, const ProfileTable& profile, const PlanRequest& request,
                 const SolverOptions& options, const TaskBudgets* budgets) {
  check_request(app, request);
  if (options.max_candidates < 2) throw ConfigError("max_candidates must be at least 2");
  return solve_checked(app, profile, request, options, budgets);
}

}  // namespace detail

PlanResult plan(const AppSpec& app, const ProfileTable& profile, const PlanRequest& request,
                const SolverOptions& options) {
  if (!request.space.task_graph_informed) return plan_uninformed(app, profile, request, options);
  return detail::solve(app, profile, request, options, nullptr);
}

}  // namespace tessera
