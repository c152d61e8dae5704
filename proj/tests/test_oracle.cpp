#include <gtest/gtest.h>

#include "support.hpp"

using namespace tessera;
using namespace tessera::testing;

TEST(Oracle, EmptyFeasibleSet) {
  const auto app = make_app({{"t", {0.9}}}, {}, {}, 500.0, 0.5, 0.0);
  ProfileTable p;
  p.insert({"t", "t_v0", {MigProfile::g7, 1}, 1}, {10.0, 100.0});
  EXPECT_FALSE(brute_force_oracle(app, p, {1000.0, 7, SearchSpace{}, 0.05}).feasible);
}

TEST(Oracle, SingleFeasibleAssignment) {
  const auto app = make_app({{"t", {0.9}}}, {}, {}, 500.0, 0.5, 0.0);
  ProfileTable p;
  p.insert({"t", "t_v0", {MigProfile::g7, 1}, 1}, {10.0, 100.0});
  const auto r = brute_force_oracle(app, p, {50.0, 7, SearchSpace{}, 0.05});
  ASSERT_TRUE(r.feasible);
  EXPECT_EQ(r.config.counts, (Assignment{{{0, 0, {MigProfile::g7, 1}, 1}, 1}}));
}

TEST(Oracle, RefusesInstancesBeyondCaps) {
  const auto b = bundled("traffic");
  EXPECT_THROW(brute_force_oracle(b.app, b.profile, {10.0, 7, SearchSpace{}, 0.05}), ConfigError);
}

TEST(Oracle, MatchesPlanner) {
  int feasible = 0;
  for (std::uint64_t seed = 1000; seed < 1150; ++seed) {
    const auto inst = random_tiny(seed);
    OracleCaps caps;
    SolverOptions opts;
    opts.max_count_per_tuple = caps.max_count;
    const auto o = brute_force_oracle(inst.app, inst.profile, inst.request, caps);
    const auto p = plan(inst.app, inst.profile, inst.request, opts);
    ASSERT_EQ(o.feasible, p.feasible) << "seed " << seed;
    if (!o.feasible) continue;
    ++feasible;
    EXPECT_NEAR(o.objective, p.objective, 1e-9) << "seed " << seed;
    // Same tie-break, so the same assignment.
    EXPECT_EQ(o.config.counts, p.config.counts) << "seed " << seed;
  }
  EXPECT_GT(feasible, 30);
}

TEST(Oracle, MatchesParallelPlanner) {
  for (std::uint64_t seed = 2000; seed < 2060; ++seed) {
    const auto inst = random_tiny(seed);
    OracleCaps caps;
    SolverOptions opts;
    opts.max_count_per_tuple = caps.max_count;
    opts.parallel = true;
    const auto o = brute_force_oracle(inst.app, inst.profile, inst.request, caps);
    const auto p = plan(inst.app, inst.profile, inst.request, opts);
    ASSERT_EQ(o.feasible, p.feasible) << "seed " << seed;
    if (o.feasible) EXPECT_NEAR(o.objective, p.objective, 1e-9);
  }
}
