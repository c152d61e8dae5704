#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"
#include "tessera/report.hpp"
#include "tessera/simulator.hpp"

using namespace tessera;
using namespace tessera::testing;

namespace {

const SegmentType k1g{MigProfile::g1, 1};

struct Single {
  AppSpec app;
  ProfileTable profile;
  Configuration config;
};

// One task, `count` instances of a 10 ms batch-1 process (100 rps each).
Single single(int count, double slo_ms = 200.0) {
  Single s{make_app({{"t", {0.9}}}, {}, {}, slo_ms, 0.5, 0.0), {}, {}};
  s.profile.insert({"t", "t_v0", k1g, 1}, {10.0, 100.0});
  s.config = derive({{{0, 0, k1g, 1}, count}}, s.app, s.profile, 50.0);
  return s;
}

SimOptions quick(std::uint64_t seed = 1) {
  SimOptions o;
  o.duration_s = 20.0;
  o.warmup_s = 2.0;
  o.seed = seed;
  return o;
}

}  // namespace

TEST(EarlyDrop, DeadlineAndStaleness) {
  const std::vector<double> fastest{30.0};
  EXPECT_FALSE(should_early_drop({100.0, 0.0, false}, 70.0, 0, fastest, 20.0).drop);
  const auto d = should_early_drop({100.0, 0.0, false}, 71.0, 0, fastest, 20.0);
  EXPECT_TRUE(d.drop);
  EXPECT_EQ(d.cause, DropCause::deadline_infeasible);
  // Waiting alone is not staleness.
  EXPECT_FALSE(should_early_drop({1000.0, 0.0, false}, 50.0, 0, fastest, 20.0).drop);
  const auto s = should_early_drop({1000.0, 0.0, true}, 21.0, 0, fastest, 20.0);
  EXPECT_TRUE(s.drop);
  EXPECT_EQ(s.cause, DropCause::stale);
  EXPECT_FALSE(should_early_drop({1000.0, 0.0, true}, 20.0, 0, fastest, 20.0).drop);
}

TEST(EarlyDrop, FastestRemainingIncludesSuccessors) {
  const auto app = make_app({{"a", {0.9}}, {"b", {0.9}}}, {{0, 1, {1.0}}}, {}, 500.0, 0.5, 0.0, 5.0);
  ProfileTable p;
  p.insert({"a", "a_v0", k1g, 1}, {10.0, 100.0});
  p.insert({"a", "a_v0", k1g, 2}, {15.0, 133.0});
  p.insert({"b", "b_v0", k1g, 1}, {20.0, 50.0});
  const auto f = fastest_remaining_ms(app, p);
  EXPECT_EQ(f[1], 20.0);
  EXPECT_EQ(f[0], 10.0 + 5.0 + 20.0);
}

TEST(Accounting, DropWeightRoundsUpFactors) {
  const auto app = make_app({{"a", {0.9, 0.8}}, {"b", {0.9}}, {"c", {0.9}}}, {{0, 1, {1.2, 0.3}}, {0, 2, {1.0, 0.2}}},
                            {}, 500.0, 0.5, 0.0);
  EXPECT_EQ(drop_weight(app, 0, 0), 3);
  EXPECT_EQ(drop_weight(app, 0, 1), 1);
  EXPECT_EQ(drop_weight(app, 1, 0), 1);
}

TEST(Accounting, ViolationRate) {
  const std::vector<RootOutcome> roots{{true, false}, {true, true}, {true, false}, {false, false}};
  const std::vector<double> weights{3.0};
  const auto v = violation_accounting(roots, weights);
  EXPECT_EQ(v.completed, 3);
  EXPECT_EQ(v.late, 1);
  EXPECT_EQ(v.dropped_roots, 1);
  EXPECT_NEAR(v.rate, (1.0 + 3.0) / (3.0 + 3.0), 1e-12);
  EXPECT_EQ(violation_accounting({}, {}).rate, 0.0);
}

TEST(Accounting, MeasuredAccuracy) {
  const std::vector<double> leaves{0.45, 0.45, 0.45};
  EXPECT_NEAR(*measured_accuracy(leaves, 0.5), 0.9, 1e-12);
  EXPECT_FALSE(measured_accuracy({}, 0.5).has_value());
}

TEST(Simulate, NoArrivals) {
  const auto s = single(1);
  const auto r = simulate(s.app, s.profile, s.config, nullptr, 0.0, quick()).report;
  EXPECT_EQ(r.arrived, 0);
  EXPECT_EQ(r.violation_rate, 0.0);
  EXPECT_FALSE(r.accuracy.has_value());
}

TEST(Simulate, LightLoadMeetsEverySlo) {
  const auto s = single(4);
  const auto r = simulate(s.app, s.profile, s.config, nullptr, 20.0, quick()).report;
  EXPECT_GT(r.arrived, 300);
  EXPECT_EQ(r.dropped, 0);
  EXPECT_EQ(r.late, 0);
  EXPECT_EQ(r.violation_rate, 0.0);
  EXPECT_NEAR(*r.accuracy, 1.0, 1e-12);
  EXPECT_EQ(r.arrived, r.completed + r.dropped);
}

TEST(Simulate, OverloadViolatesAndNamesCauses) {
  const auto s = single(1, 60.0);
  const auto r = simulate(s.app, s.profile, s.config, nullptr, 200.0, quick()).report;
  EXPECT_GT(r.violation_rate, 0.2);
  EXPECT_GT(r.drops_deadline + r.drops_stale + r.drops_no_capacity, 0);
  EXPECT_EQ(r.arrived, r.completed + r.dropped);
}

TEST(Simulate, WithoutEarlyDropRequestsAreLateInstead) {
  const auto s = single(1, 60.0);
  auto o = quick();
  o.early_drop = false;
  const auto r = simulate(s.app, s.profile, s.config, nullptr, 200.0, o).report;
  EXPECT_EQ(r.drops_deadline + r.drops_stale, 0);
  EXPECT_GT(r.late, 0);
}

TEST(Simulate, SameSeedSameReport) {
  const auto b = bundled("ar");
  const PlanRequest req{150.0, 28, SearchSpace{}, 0.05};
  const auto p = plan(b.app, b.profile, req);
  ASSERT_TRUE(p.feasible);
  auto o = quick(9);
  o.event_log = true;
  const auto a = simulate(b.app, b.profile, p.config, nullptr, 120.0, o);
  const auto c = simulate(b.app, b.profile, p.config, nullptr, 120.0, o);
  EXPECT_EQ(sim_report_json(a.report, b.app), sim_report_json(c.report, b.app));
  EXPECT_EQ(a.event_log, c.event_log);
  EXPECT_EQ(a.event_log.substr(0, kEventLogHeader.size()), kEventLogHeader);
  o.seed = 10;
  EXPECT_NE(sim_report_json(simulate(b.app, b.profile, p.config, nullptr, 120.0, o).report, b.app),
            sim_report_json(a.report, b.app));
}

TEST(Simulate, FanOutMatchesFactorsOnAverage) {
  const auto b = bundled("traffic");
  const auto p = plan(b.app, b.profile, {200.0, 28, SearchSpace{}, 0.05});
  ASSERT_TRUE(p.feasible);
  for (auto mode : {FanOut::rounded, FanOut::poisson}) {
    auto o = quick(3);
    o.fan_out = mode;
    o.duration_s = 40.0;
    const auto r = simulate(b.app, b.profile, p.config, nullptr, 100.0, o).report;
    for (TaskIndex t = 0; t < b.app.graph.size(); ++t) {
      const double want = r.predicted_task_rps[t];
      EXPECT_NEAR(r.task_rps[t], want, 0.1 * want + 3.0) << "task " << t;
    }
  }
}

TEST(Simulate, RoundRobinServesEverything) {
  const auto s = single(3);
  auto o = quick();
  o.routing = Routing::round_robin;
  const auto r = simulate(s.app, s.profile, s.config, nullptr, 60.0, o).report;
  EXPECT_EQ(r.arrived, r.completed + r.dropped);
  EXPECT_LT(r.violation_rate, 0.01);
}

TEST(Simulate, UnplacedInstancesDoNotServe) {
  const auto s = single(2);
  auto deployment = pack(std::vector<SegmentType>{k1g, k1g}, 1);
  ASSERT_TRUE(deployment.ok());
  deployment.unplaced = {1};
  deployment.gpus[0].segments.pop_back();
  // 150 rps is within two instances' capacity but not one's.
  const auto r = simulate(s.app, s.profile, s.config, &deployment, 150.0, quick()).report;
  EXPECT_EQ(r.instances, 2);
  EXPECT_EQ(r.unplaced, 1);
  EXPECT_GT(r.violation_rate, 0.2);
  const auto full = simulate(s.app, s.profile, s.config, nullptr, 150.0, quick()).report;
  EXPECT_LT(full.violation_rate, r.violation_rate);
}

TEST(Simulate, EmptyConfigurationDropsEverything) {
  const auto s = single(1);
  Configuration empty = derive({}, s.app, s.profile, 0.0);
  const auto r = simulate(s.app, s.profile, empty, nullptr, 20.0, quick()).report;
  EXPECT_GT(r.arrived, 0);
  EXPECT_EQ(r.completed, 0);
  EXPECT_EQ(r.dropped, r.arrived);
  EXPECT_EQ(r.drops_no_capacity, r.arrived);
  EXPECT_EQ(r.violation_rate, 1.0);
}
