#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tessera/placement.hpp"
#include "tessera/planner.hpp"
#include "tessera/simulator.hpp"

namespace tessera {

struct DemandTrace {
  double bin_width_s = 300.0;
  std::vector<double> demand_rps;  // one per bin, index = bin
  bool operator==(const DemandTrace&) const = default;
};

/// Diurnal shape: base + amplitude * sin over one day, plus Gaussian noise.
struct TraceShape {
  double base = 1.0;
  double amplitude = 0.5;
  double noise_sigma = 0.05;
  int bins = 288;
  double bin_width_s = 300.0;
};

/// Clamped at zero and scaled linearly so the largest bin equals `scale_to_max`.
DemandTrace gen_trace(const TraceShape& shape, double scale_to_max, std::uint64_t seed);

inline constexpr std::string_view kTraceCsvHeader = "bin_index,demand_rps";
DemandTrace parse_trace_csv(std::string_view text, double bin_width_s = 300.0);
DemandTrace load_trace(const std::filesystem::path& file, double bin_width_s = 300.0);
std::string dump_trace_csv(const DemandTrace& trace);

inline constexpr std::size_t kPredictorWindow = 5;

/// Mean of the last (up to five) observations times (1 + slack). Throws
/// ConfigError on an empty history.
double predict(std::span<const double> history, double slack = 0.05);

class Predictor {
 public:
  explicit Predictor(double slack = 0.05) : slack_(slack) {}
  void observe(double demand_rps);
  double predict() const;
  bool empty() const { return window_.empty(); }
  std::span<const double> window() const { return {window_.data(), window_.size()}; }

 private:
  double slack_;
  std::vector<double> window_;
};

struct DayOptions {
  int slices = 28;
  SearchSpace space;
  double slack = 0.05;
  std::uint64_t seed = 1;
  SimOptions sim;
  SolverOptions solver;
  MigGeometry geometry = MigGeometry::defaults();
  double reconfiguration_delay_ms = 0.0;  // folded into the warm-up
};

struct BinRecord {
  int bin = 0;
  double demand_rps = 0.0;     // actual
  double predicted_rps = 0.0;  // what the planner was asked for
  double planned_rps = 0.0;    // demand of the plan in use (differs under fallback)
  bool feasible = false;       // the prediction itself was plannable
  bool fallback = false;
  std::optional<PlanResult> plan;
  int gpus = 0;
  int unplaced = 0;
  SimReport report;
  std::string error;  // structured failure; empty on success
};

/// Predict, plan (falling back to the highest-demand configuration), pack and
/// simulate each bin in turn.
std::vector<BinRecord> run_day(const AppSpec& app, const ProfileTable& profile, const DemandTrace& trace,
                               const DayOptions& options);

}  // namespace tessera
