#include <cmath>
#include <exception>

#include "tessera/planner.hpp"

namespace tessera {

namespace {
constexpr double kTolerance = 1e-3;
constexpr double kFloor = 1e-6;
constexpr double kCeiling = 1e12;
}  // namespace

// Probes start at 1 req/s and move by powers of two before bisecting, so
// scaling every throughput by 2^k scales the answer by exactly 2^k.
MaxDemandResult max_demand(const AppSpec& app, const ProfileTable& profile, int slices,
                           const SearchSpace& space, double slack, const SolverOptions& options) {
  if (slices <= 0) throw ConfigError("max_demand needs a positive slice budget");
  SolverOptions probe_options = options;
  probe_options.feasibility_only = true;
  MaxDemandResult out;
  auto feasible = [&](double r) {
    ++out.probes;
    return plan(app, profile, {r, slices, space, slack}, probe_options).feasible;
  };

  double lo = 0.0, hi = 0.0;
  if (feasible(1.0)) {
    lo = 1.0;
    while (true) {
      if (lo * 2.0 > kCeiling) {
        out.demand_rps = lo;
        out.diagnosis = "demand is unbounded up to " + format_number(kCeiling);
        return out;
      }
      if (!feasible(lo * 2.0)) {
        hi = lo * 2.0;
        break;
      }
      lo *= 2.0;
    }
  } else {
    hi = 1.0;
    for (double r = 0.5; r >= kFloor; r /= 2.0) {
      if (feasible(r)) {
        lo = r;
        break;
      }
      hi = r;
    }
    if (lo == 0.0) {
      SolverOptions diag = options;
      diag.feasibility_only = false;
      const auto r = plan(app, profile, {kFloor, slices, space, slack}, diag);
      out.demand_rps = 0.0;
      out.diagnosis = r.diagnosis.empty() ? "infeasible at any positive demand" : r.diagnosis;
      return out;
    }
  }
  while (hi - lo > kTolerance * lo) {
    const double mid = 0.5 * (lo + hi);
    if (feasible(mid)) lo = mid;
    else hi = mid;
  }
  out.demand_rps = lo;
  return out;
}

std::vector<SweepRow> sweep(const AppSpec& app, const ProfileTable& profile, int slices, double slack,
                            const SolverOptions& options) {
  const auto spaces = SearchSpace::all();
  std::vector<SweepRow> rows(spaces.size());
  SolverOptions inner = options;
  inner.parallel = false;  // the spaces already run side by side
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < spaces.size(); ++i) {
    auto& row = rows[i];
    row.space = spaces[i];
    try {
      const auto md = max_demand(app, profile, slices, spaces[i], slack, inner);
      row.max_demand_rps = md.demand_rps;
      if (md.demand_rps > 0.0) {
        const auto r = plan(app, profile, {md.demand_rps, slices, spaces[i], slack}, inner);
        if (r.feasible) row.pct_slices = 100.0 * r.config.total_slices / slices;
      } else {
        row.error = md.diagnosis;
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  }
  const double base = rows[0].max_demand_rps;
  for (auto& row : rows) {
    row.ratio = base > 0.0 ? row.max_demand_rps / base : 0.0;
    if (base <= 0.0 && row.error.empty()) row.error = "Unopt serves no demand; ratio undefined";
  }
  return rows;
}

}  // namespace tessera
