#include "tessera/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <tuple>

namespace tessera {

std::string_view to_string(DropCause c) {
  switch (c) {
    case DropCause::none: return "none";
    case DropCause::deadline_infeasible: return "deadline_infeasible";
    case DropCause::stale: return "stale";
    case DropCause::no_capacity: return "no_capacity";
  }
  return "?";
}

std::vector<double> fastest_remaining_ms(const AppSpec& app, const ProfileTable& profile) {
  const auto& g = app.graph;
  std::vector<double> own(g.size(), 0.0);
  for (TaskIndex t = 0; t < g.size(); ++t) {
    try {
      own[t] = best_latency(profile, g.tasks[t].id);
    } catch (const Error&) {
      own[t] = 0.0;  // never served, so nothing to wait for
    }
  }
  std::vector<double> rest(g.size(), 0.0);
  auto order = g.topological_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const TaskIndex t = *it;
    double next = 0.0;
    bool any = false;
    for (auto e : g.out_edges(t)) {
      const double via = app.hop_latency_ms + rest[g.edges[e].dst];
      next = any ? std::min(next, via) : via;
      any = true;
    }
    rest[t] = own[t] + next;
  }
  return rest;
}

DropDecision should_early_drop(const QueuedRequest& request, double now_ms, TaskIndex task,
                               std::span<const double> fastest_remaining, double staleness_ms) {
  if (now_ms + fastest_remaining[task] > request.deadline_ms) return {true, DropCause::deadline_infeasible};
  if (request.left_behind && now_ms - request.enqueued_ms > staleness_ms)
    return {true, DropCause::stale};
  return {};
}

DropDecision should_early_drop(const QueuedRequest& request, double now_ms, TaskIndex task,
                               const ProfileTable& profile, const AppSpec& app) {
  const auto rest = fastest_remaining_ms(app, profile);
  return should_early_drop(request, now_ms, task, rest, app.staleness_ms);
}

int drop_weight(const AppSpec& app, TaskIndex task, std::size_t variant) {
  double sum = 0.0;
  for (auto e : app.graph.out_edges(task)) sum += app.graph.edges[e].factor[variant];
  return std::max(1, static_cast<int>(std::ceil(sum - 1e-12)));
}

ViolationStats violation_accounting(std::span<const RootOutcome> roots, std::span<const double> drop_weights) {
  ViolationStats v;
  for (const auto& r : roots) {
    if (r.completed) {
      ++v.completed;
      if (r.late) ++v.late;
    } else {
      ++v.dropped_roots;
    }
  }
  for (double w : drop_weights) v.drop_weight += w;
  const double denom = static_cast<double>(v.completed) + v.drop_weight;
  v.rate = denom > 0.0 ? (static_cast<double>(v.late) + v.drop_weight) / denom : 0.0;
  return v;
}

std::optional<double> measured_accuracy(std::span<const double> leaf_products, double a_max) {
  if (leaf_products.empty() || !(a_max > 0.0)) return std::nullopt;
  double sum = 0.0;
  for (double p : leaf_products) sum += p;
  return sum / static_cast<double>(leaf_products.size()) / a_max;
}

std::vector<InstanceKey> expand_instances(const Configuration& config) {
  std::vector<InstanceKey> out;
  for (const auto& [key, count] : config.counts)
    for (int i = 0; i < count; ++i) out.push_back(key);
  return out;
}

namespace {

enum class Ev : std::uint8_t { root_arrival, task_arrival, window, batch_done };

struct Event {
  double time;
  std::uint64_t seq;
  Ev kind;
  std::uint64_t a;  // sub-request or process
  std::uint64_t b;  // window token
};

struct Later {
  bool operator()(const Event& x, const Event& y) const {
    return x.time != y.time ? x.time > y.time : x.seq > y.seq;
  }
};

struct Root {
  double arrival = 0.0;
  double deadline = 0.0;
  long outstanding = 0;
  bool dropped = false;
  bool counted = false;
  double leaf_sum = 0.0;
  long leaves = 0;
};

struct Sub {
  std::uint64_t root = 0;
  TaskIndex task = 0;
  double accuracy = 1.0;  // product over the tasks served so far
  QueuedRequest state;
};

struct Process {
  std::size_t instance = 0;
  TaskIndex task = 0;
  std::size_t variant = 0;
  int bmax = 1;
  double rate = 0.0;  // requests per ms
  std::vector<std::pair<int, double>> latency;  // profiled (batch, latency) for this segment
  std::deque<std::uint64_t> queue;
  std::vector<std::uint64_t> batch;
  bool busy = false;
  double busy_until = 0.0;
  bool window_open = false;
  std::uint64_t token = 0;

  double service_ms(int size) const {
    for (const auto& [b, l] : latency)
      if (b >= size) return l;
    return latency.back().second;
  }
};

class Simulation {
 public:
  Simulation(const AppSpec& app, const ProfileTable& profile, const Configuration& config,
             const DeploymentPlan* deployment, double rate, const SimOptions& opt)
      : app_(app), config_(config), opt_(opt), rate_per_ms_(rate / 1000.0),
        arrivals_(opt.seed), fanout_(opt.seed * 0x9E3779B97F4A7C15ULL + 0x2545F4914F6CDD1DULL) {
    const auto& g = app.graph;
    fastest_ = fastest_remaining_ms(app, profile);
    by_task_.assign(g.size(), {});
    rr_.assign(g.size(), 0);
    task_arrivals_.assign(g.size(), 0);
    std::set<std::size_t> unplaced;
    if (deployment) unplaced.insert(deployment->unplaced.begin(), deployment->unplaced.end());
    const auto keys = expand_instances(config);
    report_.instances = static_cast<int>(keys.size());
    report_.unplaced = static_cast<int>(unplaced.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (unplaced.count(i)) continue;
      const auto& k = keys[i];
      const auto pk = profile_key(app, k);
      const ProfileEntry* e = profile.find(pk);
      if (!e) throw ConfigError("configuration instance missing from the profile");
      report_.slices_used += k.segment.slices();
      std::vector<std::pair<int, double>> lat;
      for (int b : kBatchSizes) {
        if (b > k.batch) break;
        auto q = pk;
        q.batch = b;
        if (const auto* f = profile.find(q)) lat.emplace_back(b, f->latency_ms);
      }
      for (int m = 0; m < k.segment.mps; ++m) {
        Process p;
        p.instance = i;
        p.task = k.task;
        p.variant = k.variant;
        p.bmax = k.batch;
        p.rate = e->throughput_rps / k.segment.mps / 1000.0;
        p.latency = lat;
        by_task_[k.task].push_back(procs_.size());
        procs_.push_back(std::move(p));
      }
    }
  }

  SimResult run() {
    const double start = opt_.warmup_s * 1000.0;
    stop_ = (opt_.warmup_s + opt_.duration_s) * 1000.0;
    if (rate_per_ms_ > 0.0) {
      const double first = next_gap();
      if (first < stop_) schedule(first, Ev::root_arrival, 0, 0);
    }
    while (!events_.empty()) {
      const Event ev = events_.top();
      events_.pop();
      now_ = ev.time;
      switch (ev.kind) {
        case Ev::root_arrival: root_arrival(start); break;
        case Ev::task_arrival: task_arrival(ev.a); break;
        case Ev::window: window(ev.a, ev.b); break;
        case Ev::batch_done: batch_done(ev.a); break;
      }
    }
    return finish();
  }

 private:
  double next_gap() { return std::exponential_distribution<double>(rate_per_ms_)(arrivals_); }

  void schedule(double t, Ev kind, std::uint64_t a, std::uint64_t b) {
    events_.push({t, seq_++, kind, a, b});
  }

  void log(std::string_view event, std::uint64_t sub, long instance, std::string_view detail) {
    if (!opt_.event_log) return;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", now_);
    log_ += buf;
    log_ += ',';
    log_ += event;
    log_ += ',' + std::to_string(sub) + ',' + app_.graph.tasks[subs_[sub].task].id + ',';
    log_ += instance < 0 ? std::string() : std::to_string(instance);
    log_ += ',';
    log_ += detail;
    log_ += '\n';
  }

  void spawn(std::uint64_t root, TaskIndex task, double at, double accuracy) {
    Sub s;
    s.root = root;
    s.task = task;
    s.accuracy = accuracy;
    s.state.deadline_ms = roots_[root].deadline;
    subs_.push_back(s);
    ++roots_[root].outstanding;
    schedule(at, Ev::task_arrival, subs_.size() - 1, 0);
  }

  void root_arrival(double measure_start) {
    Root r;
    r.arrival = now_;
    r.deadline = now_ + app_.slo_latency_ms;
    r.counted = now_ >= measure_start;
    roots_.push_back(r);
    if (r.counted) ++report_.arrived;
    spawn(roots_.size() - 1, app_.graph.entry(), now_ + app_.hop_latency_ms, 1.0);
    const double next = now_ + next_gap();
    if (next < stop_) schedule(next, Ev::root_arrival, 0, 0);
  }

  std::size_t route(TaskIndex t) {
    const auto& list = by_task_[t];
    if (opt_.routing == Routing::round_robin) return list[rr_[t]++ % list.size()];
    std::size_t best = list.front();
    double best_load = std::numeric_limits<double>::infinity();
    for (auto p : list) {
      const double load = (procs_[p].queue.size() + 1.0) / procs_[p].rate;
      if (load < best_load) {
        best_load = load;
        best = p;
      }
    }
    return best;
  }

  void task_arrival(std::uint64_t sid) {
    Sub& s = subs_[sid];
    if (roots_[s.root].counted) ++task_arrivals_[s.task];
    if (by_task_[s.task].empty()) {
      log("arrive", sid, -1, "");
      drop(sid, DropCause::no_capacity, app_.graph.tasks[s.task].best_variant(), -1);
      return;
    }
    s.state.enqueued_ms = now_;
    const auto p = route(s.task);
    log("arrive", sid, static_cast<long>(procs_[p].instance), "");
    enqueue(p, sid);
  }

  void enqueue(std::size_t p, std::uint64_t sid) {
    auto& proc = procs_[p];
    proc.queue.push_back(sid);
    report_.max_queue = std::max(report_.max_queue, proc.queue.size());
    if (proc.busy) return;
    if (static_cast<int>(proc.queue.size()) >= proc.bmax) {
      launch(p);
    } else if (!proc.window_open) {
      proc.window_open = true;
      schedule(now_ + config_.latency[proc.task], Ev::window, p, ++proc.token);
    }
  }

  // Another process of the task whose next batch still has room, the one
  // that frees up first.
  std::optional<std::size_t> taker(std::size_t from) {
    std::optional<std::size_t> best;
    std::pair<double, double> best_key{std::numeric_limits<double>::infinity(), 0.0};
    for (auto q : by_task_[procs_[from].task]) {
      const auto& proc = procs_[q];
      if (q == from || static_cast<int>(proc.queue.size()) >= proc.bmax) continue;
      const std::pair<double, double> key{proc.busy ? proc.busy_until : now_, (proc.queue.size() + 1.0) / proc.rate};
      if (key < best_key) {
        best_key = key;
        best = q;
      }
    }
    return best;
  }

  void window(std::uint64_t p, std::uint64_t token) {
    auto& proc = procs_[p];
    if (token != proc.token || !proc.window_open || proc.busy || proc.queue.empty()) return;
    launch(p);
  }

  void launch(std::uint64_t p) {
    auto& proc = procs_[p];
    proc.window_open = false;
    ++proc.token;
    proc.batch.clear();
    while (static_cast<int>(proc.batch.size()) < proc.bmax && !proc.queue.empty()) {
      const auto sid = proc.queue.front();
      proc.queue.pop_front();
      if (opt_.early_drop) {
        const auto d = should_early_drop(subs_[sid].state, now_, proc.task, fastest_, app_.staleness_ms);
        if (d.drop) {
          drop(sid, d.cause, proc.variant, static_cast<long>(proc.instance));
          continue;
        }
      }
      proc.batch.push_back(sid);
    }
    if (proc.batch.empty()) return;
    proc.busy = true;
    const double service = proc.service_ms(static_cast<int>(proc.batch.size()));
    proc.busy_until = now_ + service;
    for (auto sid : proc.batch)
      log("start", sid, static_cast<long>(proc.instance), "batch=" + std::to_string(proc.batch.size()));
    schedule(now_ + service, Ev::batch_done, p, 0);
    if (static_cast<int>(proc.batch.size()) == proc.bmax) hand_off(p);
  }

  // Requests a full batch left behind move to an idle process of the task
  // when one has room. The rest were picked up by no instance and face the
  // staleness test.
  void hand_off(std::size_t p) {
    std::deque<std::uint64_t> left;
    left.swap(procs_[p].queue);
    while (!left.empty()) {
      const auto sid = left.front();
      left.pop_front();
      if (const auto q = taker(p)) {
        log("handoff", sid, static_cast<long>(procs_[*q].instance), "");
        enqueue(*q, sid);
        continue;
      }
      if (opt_.early_drop) {
        auto& st = subs_[sid].state;
        st.left_behind = true;
        const auto d = should_early_drop(st, now_, procs_[p].task, fastest_, app_.staleness_ms);
        st.left_behind = false;
        if (d.drop) {
          drop(sid, d.cause, procs_[p].variant, static_cast<long>(procs_[p].instance));
          continue;
        }
      }
      procs_[p].queue.push_back(sid);
    }
  }

  int sample_fanout(double f) {
    if (opt_.fan_out == FanOut::poisson)
      return f > 0.0 ? std::poisson_distribution<int>(f)(fanout_) : 0;
    const double whole = std::floor(f);
    const double frac = f - whole;
    int n = static_cast<int>(whole);
    if (frac > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(fanout_) < frac) ++n;
    return n;
  }

  void batch_done(std::uint64_t p) {
    auto& proc = procs_[p];
    proc.busy = false;
    const auto batch = std::move(proc.batch);
    proc.batch.clear();
    const auto& g = app_.graph;
    const double acc = g.tasks[proc.task].variants[proc.variant].accuracy;
    for (auto sid : batch) {
      log("done", sid, static_cast<long>(proc.instance), "");
      const Sub s = subs_[sid];
      Root& r = roots_[s.root];
      const auto out = g.out_edges(s.task);
      if (out.empty()) {
        r.leaf_sum += s.accuracy * acc;
        ++r.leaves;
      }
      for (auto e : out) {
        const int n = sample_fanout(g.edges[e].factor[proc.variant]);
        if (r.counted) {
          auto& f = factors_[{s.task, proc.variant, e}];
          ++f.served;
          f.emitted += n;
        }
        for (int i = 0; i < n; ++i) spawn(s.root, g.edges[e].dst, now_ + app_.hop_latency_ms, s.accuracy * acc);
      }
      settle(sid);
    }
    if (!procs_[p].queue.empty()) launch(p);
  }

  void drop(std::uint64_t sid, DropCause cause, std::size_t variant, long instance) {
    log("drop", sid, instance, to_string(cause));
    Root& r = roots_[subs_[sid].root];
    r.dropped = true;
    if (r.counted) {
      drop_weights_.push_back(drop_weight(app_, subs_[sid].task, variant));
      switch (cause) {
        case DropCause::deadline_infeasible: ++report_.drops_deadline; break;
        case DropCause::stale: ++report_.drops_stale; break;
        case DropCause::no_capacity: ++report_.drops_no_capacity; break;
        case DropCause::none: break;
      }
    }
    settle(sid);
  }

  void settle(std::uint64_t sid) {
    Root& r = roots_[subs_[sid].root];
    if (--r.outstanding > 0 || !r.counted) return;
    RootOutcome o;
    o.completed = !r.dropped;
    o.late = o.completed && now_ > r.deadline;
    outcomes_.push_back(o);
    if (o.completed) {
      latencies_.push_back(now_ - r.arrival);
      for (long i = 0; i < r.leaves; ++i) leaf_products_.push_back(r.leaf_sum / r.leaves);
    }
  }

  SimResult finish() {
    auto& rep = report_;
    rep.offered_rps = rate_per_ms_ * 1000.0;
    rep.duration_s = opt_.duration_s;
    const auto v = violation_accounting(outcomes_, drop_weights_);
    rep.completed = v.completed;
    rep.late = v.late;
    rep.dropped = v.dropped_roots;
    rep.drop_weight = v.drop_weight;
    rep.violation_rate = v.rate;
    rep.accuracy = measured_accuracy(leaf_products_, app_.max_accuracy());
    rep.accuracy_drop_pct = rep.accuracy ? (1.0 - *rep.accuracy) * 100.0 : 0.0;
    rep.slices_fraction = opt_.slices_available > 0
                              ? static_cast<double>(rep.slices_used) / opt_.slices_available
                              : 0.0;
    if (!latencies_.empty()) {
      std::sort(latencies_.begin(), latencies_.end());
      auto rank = [&](double q) {
        const auto i = static_cast<std::size_t>(std::ceil(q * latencies_.size())) - 1;
        return latencies_[std::min(i, latencies_.size() - 1)];
      };
      rep.latency_p50_ms = rank(0.50);
      rep.latency_p99_ms = rank(0.99);
    }
    for (auto n : task_arrivals_)
      rep.task_rps.push_back(opt_.duration_s > 0.0 ? n / opt_.duration_s : 0.0);
    rep.predicted_task_rps = propagate_demand(app_.graph, rep.offered_rps, config_.edge_factor);
    for (const auto& [k, f] : factors_) {
      FactorSample s = f;
      s.task = std::get<0>(k);
      s.variant = std::get<1>(k);
      s.edge = std::get<2>(k);
      rep.factors.push_back(s);
    }
    SimResult out;
    out.report = std::move(rep);
    if (opt_.event_log) out.event_log = std::string(kEventLogHeader) + "\n" + log_;
    return out;
  }

  const AppSpec& app_;
  const Configuration& config_;
  SimOptions opt_;
  double rate_per_ms_;
  std::mt19937_64 arrivals_;
  std::mt19937_64 fanout_;
  std::vector<double> fastest_;
  std::vector<Process> procs_;
  std::vector<std::vector<std::size_t>> by_task_;
  std::vector<std::size_t> rr_;
  std::vector<Root> roots_;
  std::vector<Sub> subs_;
  std::priority_queue<Event, std::vector<Event>, Later> events_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  double stop_ = 0.0;
  std::vector<long> task_arrivals_;
  std::map<std::tuple<TaskIndex, std::size_t, std::size_t>, FactorSample> factors_;
  std::vector<RootOutcome> outcomes_;
  std::vector<double> drop_weights_;
  std::vector<double> leaf_products_;
  std::vector<double> latencies_;
  SimReport report_;
  std::string log_;
};

}  // namespace

SimResult simulate(const AppSpec& app, const ProfileTable& profile, const Configuration& config,
                   const DeploymentPlan* deployment, double rate_rps, const SimOptions& options) {
  if (!(rate_rps >= 0.0) || !std::isfinite(rate_rps)) throw ConfigError("arrival rate must be non-negative");
  if (!(options.duration_s >= 0.0) || !(options.warmup_s >= 0.0))
    throw ConfigError("simulated durations must be non-negative");
  if (config.latency.size() != app.graph.size()) throw ConfigError("configuration does not match the app");
  Simulation sim(app, profile, config, deployment, rate_rps, options);
  return sim.run();
}

}  // namespace tessera
