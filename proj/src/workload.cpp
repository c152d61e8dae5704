#include "tessera/workload.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <tuple>

namespace tessera {

DemandTrace gen_trace(const TraceShape& shape, double scale_to_max, std::uint64_t seed) {
  if (shape.bins < 1) throw ConfigError("a trace needs at least one bin");
  if (!(scale_to_max >= 0.0)) throw ConfigError("scale-to-max must be non-negative");
  if (!(shape.noise_sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
  if (!(shape.bin_width_s > 0.0)) throw ConfigError("bin width must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  DemandTrace t;
  t.bin_width_s = shape.bin_width_s;
  // trough at midnight, peak at noon
  for (int i = 0; i < shape.bins; ++i) {
    const double phase = 2.0 * std::numbers::pi * i / shape.bins;
    double v = shape.base - shape.amplitude * std::cos(phase);
    if (shape.noise_sigma > 0.0) v += shape.noise_sigma * noise(rng);
    t.demand_rps.push_back(std::max(0.0, v));
  }
  const double peak = *std::max_element(t.demand_rps.begin(), t.demand_rps.end());
  for (auto& d : t.demand_rps) d = peak > 0.0 ? (d == peak ? scale_to_max : d / peak * scale_to_max) : 0.0;
  return t;
}

DemandTrace parse_trace_csv(std::string_view text, double bin_width_s) {
  DemandTrace t;
  t.bin_width_s = bin_width_s;
  std::istringstream in{std::string(text)};
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (row == 1) {
      if (line != kTraceCsvHeader) throw ValidationError("trace header must be '" + std::string(kTraceCsvHeader) + "'", row);
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ValidationError("expected two columns", row);
    long idx = 0;
    double d = 0.0;
    const char* b = line.data();
    auto r1 = std::from_chars(b, b + comma, idx);
    auto r2 = std::from_chars(b + comma + 1, b + line.size(), d);
    if (r1.ec != std::errc{} || r1.ptr != b + comma || r2.ec != std::errc{} || r2.ptr != b + line.size())
      throw ValidationError("malformed number", row);
    if (idx != static_cast<long>(t.demand_rps.size())) throw ValidationError("bin indices must be contiguous from 0", row);
    if (!(d >= 0.0) || !std::isfinite(d)) throw ValidationError("demand must be non-negative", row);
    t.demand_rps.push_back(d);
  }
  if (row == 0) throw ValidationError("empty trace file", 1);
  return t;
}

DemandTrace load_trace(const std::filesystem::path& file, double bin_width_s) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open trace file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trace_csv(ss.str(), bin_width_s);
}

std::string dump_trace_csv(const DemandTrace& trace) {
  std::string out(kTraceCsvHeader);
  out += '\n';
  for (std::size_t i = 0; i < trace.demand_rps.size(); ++i)
    out += std::to_string(i) + ',' + format_number(trace.demand_rps[i]) + '\n';
  return out;
}

double predict(std::span<const double> history, double slack) {
  if (history.empty()) throw ConfigError("prediction needs at least one bin of history");
  const std::size_t n = std::min(history.size(), kPredictorWindow);
  double sum = 0.0;
  for (std::size_t i = history.size() - n; i < history.size(); ++i) sum += history[i];
  return sum / static_cast<double>(n) * (1.0 + slack);
}

void Predictor::observe(double demand_rps) {
  window_.push_back(demand_rps);
  if (window_.size() > kPredictorWindow) window_.erase(window_.begin());
}

double Predictor::predict() const { return tessera::predict(window(), slack_); }

namespace {

using FactorKey = std::tuple<TaskIndex, std::size_t, std::size_t>;  // task, variant, edge

// Static factors overridden by the mean of whatever the last bins measured.
AppSpec with_measured_factors(const AppSpec& app, const std::deque<std::map<FactorKey, double>>& history) {
  std::map<FactorKey, std::pair<double, int>> acc;
  for (const auto& bin : history)
    for (const auto& [k, f] : bin) {
      acc[k].first += f;
      acc[k].second += 1;
    }
  AppSpec out = app;
  for (const auto& [k, s] : acc) {
    const auto [t, v, e] = k;
    out.graph.edges[e].factor[v] = s.first / s.second;
  }
  return out;
}

}  // namespace

std::vector<BinRecord> run_day(const AppSpec& app, const ProfileTable& profile, const DemandTrace& trace,
                               const DayOptions& options) {
  if (trace.demand_rps.empty()) throw ConfigError("the trace has no bins");
  options.geometry.validate();
  const int gpu_count = options.slices / options.geometry.slices_per_gpu;
  Predictor predictor(options.slack);
  std::deque<std::map<FactorKey, double>> factor_history;
  // max_demand is costly; reuse it while the factors stay the same
  std::map<std::vector<std::vector<double>>, std::optional<PlanResult>> fallback_cache;

  std::vector<BinRecord> out;
  for (std::size_t i = 0; i < trace.demand_rps.size(); ++i) {
    BinRecord rec;
    rec.bin = static_cast<int>(i);
    rec.demand_rps = trace.demand_rps[i];
    try {
      rec.predicted_rps = predictor.empty() ? trace.demand_rps[0] * (1.0 + options.slack) : predictor.predict();
      const AppSpec planned_app = with_measured_factors(app, factor_history);
      PlanRequest req{rec.predicted_rps, options.slices, options.space, options.slack};
      auto result = plan(planned_app, profile, req, options.solver);
      rec.feasible = result.feasible;
      rec.planned_rps = rec.predicted_rps;
      if (!result.feasible) {
        rec.fallback = true;
        std::vector<std::vector<double>> key;
        for (const auto& e : planned_app.graph.edges) key.push_back(e.factor);
        auto it = fallback_cache.find(key);
        if (it == fallback_cache.end()) {
          std::optional<PlanResult> best;
          const auto md = max_demand(planned_app, profile, options.slices, options.space, options.slack,
                                     options.solver);
          if (md.demand_rps > 0.0) {
            auto r = plan(planned_app, profile, {md.demand_rps, options.slices, options.space, options.slack},
                          options.solver);
            if (r.feasible) best = std::move(r);
          }
          it = fallback_cache.emplace(key, std::move(best)).first;
        }
        if (it->second) {
          result = *it->second;
          rec.planned_rps = it->second->config.demand.empty() ? 0.0 : it->second->config.demand[app.graph.entry()];
        } else {
          rec.error = "no feasible configuration at any demand: " + result.diagnosis;
          rec.planned_rps = 0.0;
        }
      }
      // without any plan the empty configuration drops everything
      const Configuration& config = result.config;
      std::vector<SegmentType> segments;
      for (const auto& k : expand_instances(config)) segments.push_back(k.segment);
      const auto deployment = pack(segments, gpu_count, options.geometry);
      rec.gpus = deployment.gpus_used();
      rec.unplaced = static_cast<int>(deployment.unplaced.size());
      SimOptions sim = options.sim;
      sim.seed = options.seed + i;
      sim.slices_available = options.slices;
      sim.warmup_s += options.reconfiguration_delay_ms / 1000.0;
      rec.report = simulate(app, profile, config, &deployment, rec.demand_rps, sim).report;
      rec.plan = std::move(result);

      std::map<FactorKey, double> measured;
      for (const auto& f : rec.report.factors)
        if (f.served > 0) measured[{f.task, f.variant, f.edge}] = f.factor();
      factor_history.push_back(std::move(measured));
      if (factor_history.size() > kPredictorWindow) factor_history.pop_front();
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
    predictor.observe(rec.demand_rps);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace tessera
