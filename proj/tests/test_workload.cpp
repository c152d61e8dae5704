#include <gtest/gtest.h>

#include "support.hpp"
#include "tessera/report.hpp"
#include "tessera/workload.hpp"

using namespace tessera;
using namespace tessera::testing;

TEST(Trace, ShapeAndScale) {
  const auto t = gen_trace({}, 400.0, 5);
  ASSERT_EQ(t.demand_rps.size(), 288u);
  EXPECT_EQ(t.bin_width_s, 300.0);
  EXPECT_NEAR(*std::max_element(t.demand_rps.begin(), t.demand_rps.end()), 400.0, 1e-9);
  for (double d : t.demand_rps) EXPECT_GE(d, 0.0);
  EXPECT_EQ(gen_trace({}, 400.0, 5), t);
  EXPECT_NE(gen_trace({}, 400.0, 6), t);
}

TEST(Trace, ConstantWithoutAmplitudeOrNoise) {
  TraceShape shape;
  shape.amplitude = 0.0;
  shape.noise_sigma = 0.0;
  shape.bins = 12;
  const auto t = gen_trace(shape, 50.0, 1);
  for (double d : t.demand_rps) EXPECT_DOUBLE_EQ(d, 50.0);
}

TEST(Trace, InvalidShapes) {
  TraceShape shape;
  shape.bins = 0;
  EXPECT_THROW(gen_trace(shape, 1.0, 1), ConfigError);
  EXPECT_THROW(gen_trace({}, -1.0, 1), ConfigError);
}

TEST(Trace, CsvRoundTrip) {
  const auto t = gen_trace({}, 123.0, 2);
  EXPECT_EQ(parse_trace_csv(dump_trace_csv(t)), t);
  const auto u = parse_trace_csv("bin_index,demand_rps\r\n0,1.5\r\n1,2\r\n");
  EXPECT_EQ(u.demand_rps, (std::vector<double>{1.5, 2.0}));
}

TEST(Trace, CsvErrorsCarryLines) {
  auto line_of = [](const std::string& text) {
    try {
      parse_trace_csv(text);
    } catch (const ValidationError& e) {
      return e.line();
    }
    return -1;
  };
  EXPECT_EQ(line_of("bin,demand\n0,1\n"), 1);
  EXPECT_EQ(line_of("bin_index,demand_rps\n0,1\n2,1\n"), 3);
  EXPECT_EQ(line_of("bin_index,demand_rps\n0,-4\n"), 2);
  EXPECT_EQ(line_of("bin_index,demand_rps\n0,abc\n"), 2);
  EXPECT_EQ(line_of("bin_index,demand_rps\n0\n"), 2);
  EXPECT_EQ(line_of(""), 1);
}

TEST(Predict, WindowMeanWithSlack) {
  const std::vector<double> h{10.0, 10.0, 10.0};
  EXPECT_DOUBLE_EQ(predict(h), 10.5);
  const std::vector<double> long_h{1000.0, 20.0, 20.0, 20.0, 20.0, 20.0};
  EXPECT_DOUBLE_EQ(predict(long_h), 21.0);
  const std::vector<double> zeros{0.0, 0.0};
  EXPECT_EQ(predict(zeros), 0.0);
  EXPECT_THROW(predict({}), ConfigError);

  Predictor p(0.0);
  EXPECT_TRUE(p.empty());
  for (double d : {5.0, 5.0, 5.0, 5.0, 5.0, 100.0}) p.observe(d);
  EXPECT_EQ(p.window().size(), kPredictorWindow);
  EXPECT_DOUBLE_EQ(p.predict(), 24.0);
}

namespace {

DayOptions short_day() {
  DayOptions o;
  o.sim.duration_s = 5.0;
  o.sim.warmup_s = 1.0;
  return o;
}

}  // namespace

TEST(Day, ConstantTraceSettles) {
  const auto b = bundled("social");
  DemandTrace t{300.0, std::vector<double>(8, 100.0)};
  const auto days = run_day(b.app, b.profile, t, short_day());
  ASSERT_EQ(days.size(), 8u);
  for (const auto& r : days) {
    EXPECT_TRUE(r.error.empty()) << r.error;
    EXPECT_DOUBLE_EQ(r.predicted_rps, 105.0);
    EXPECT_TRUE(r.feasible);
    EXPECT_FALSE(r.fallback);
  }
  // Once the factor window is full the plan stops changing.
  for (std::size_t i = 6; i < days.size(); ++i)
    EXPECT_EQ(days[i].plan->config.counts, days[5].plan->config.counts) << "bin " << i;
}

TEST(Day, ZeroDemandHasNoViolations) {
  const auto b = bundled("ar");
  DemandTrace t{300.0, std::vector<double>(3, 0.0)};
  for (const auto& r : run_day(b.app, b.profile, t, short_day())) {
    EXPECT_TRUE(r.error.empty()) << r.error;
    EXPECT_EQ(r.report.arrived, 0);
    EXPECT_EQ(r.report.violation_rate, 0.0);
  }
}

TEST(Day, FallsBackAboveCapacity) {
  const auto b = bundled("social");
  const auto md = max_demand(b.app, b.profile, 28, SearchSpace{});
  DemandTrace t{300.0, {md.demand_rps * 3.0, md.demand_rps * 3.0}};
  const auto days = run_day(b.app, b.profile, t, short_day());
  for (const auto& r : days) {
    EXPECT_TRUE(r.fallback);
    ASSERT_TRUE(r.plan.has_value());
    EXPECT_TRUE(r.plan->feasible);
    EXPECT_LT(r.planned_rps, r.predicted_rps);
    EXPECT_GT(r.report.violation_rate, 0.0);
  }
}

TEST(Day, Deterministic) {
  const auto b = bundled("ar");
  const auto t = gen_trace({.bins = 4}, 150.0, 3);
  const auto a = run_day(b.app, b.profile, t, short_day());
  const auto c = run_day(b.app, b.profile, t, short_day());
  EXPECT_EQ(day_report_csv(a), day_report_csv(c));
  EXPECT_THROW(run_day(b.app, b.profile, DemandTrace{}, short_day()), ConfigError);
}
