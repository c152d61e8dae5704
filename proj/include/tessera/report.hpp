#pragma once

#include <span>
#include <string>

#include "tessera/planner.hpp"
#include "tessera/simulator.hpp"
#include "tessera/workload.hpp"

namespace tessera {

/// Human-readable table of a plan: instances, per-task figures, constraints.
std::string plan_summary(const PlanResult& result, const AppSpec& app, const PlanRequest& request);

std::string sim_report_json(const SimReport& report, const AppSpec& app);
std::string sim_report_csv_header();
std::string sim_report_csv_row(const SimReport& report);

std::string sweep_csv(std::span<const SweepRow> rows);

/// One row per bin: the simulation report plus a plan summary.
std::string day_report_csv(std::span<const BinRecord> records);
/// Tidy long format (bin_index,metric,value) for the per-bin panels.
std::string day_long_csv(std::span<const BinRecord> records);
/// Every bin's simulation report as one JSON array.
std::string day_reports_json(std::span<const BinRecord> records, const AppSpec& app);

}  // namespace tessera
