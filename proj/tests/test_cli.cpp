#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "support.hpp"
#include "tessera/cli.hpp"
#include "tessera/workload.hpp"

using namespace tessera;
using namespace tessera::testing;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string app(const std::string& name) { return (apps_dir() / (name + ".json")).string(); }
std::string profile(const std::string& name) { return (apps_dir() / (name + ".profile.csv")).string(); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("tessera_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  static std::string slurp(const std::string& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
  }
  std::filesystem::path dir_;
};

}  // namespace

TEST_F(Cli, FeasiblePlanPrintsJson) {
  const auto r = run({"plan", "--app", app("social"), "--profile", profile("social"), "--demand", "100", "--out",
                      path("plan.json")});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("objective"), std::string::npos);
  const auto j = nlohmann::json::parse(slurp(path("plan.json")));
  EXPECT_TRUE(j["feasible"].get<bool>());
  EXPECT_TRUE(std::filesystem::exists(path("plan.json.manifest.json")));

  const auto s = run({"plan", "--app", app("social"), "--profile", profile("social"), "--demand", "100"});
  EXPECT_EQ(s.code, kExitOk);
  EXPECT_NE(s.out.find("\"feasible\": true"), std::string::npos);
}

TEST_F(Cli, InfeasiblePlanNamesBindingConstraint) {
  const auto r = run({"plan", "--app", app("social"), "--profile", profile("social"), "--demand", "1e9"});
  EXPECT_EQ(r.code, kExitInfeasible);
  EXPECT_NE(r.err.find("infeasible:"), std::string::npos);
  EXPECT_NE(r.err.find("throughput"), std::string::npos);
}

TEST_F(Cli, BadInputsExitOne) {
  std::string knobs = slurp((apps_dir() / "social.knobs.json").string());
  knobs.replace(knobs.find("\"gamma_s\": 0.6"), 14, "\"gamma_s\": 0.0");
  std::ofstream(path("knobs.json")) << knobs;
  auto r = run({"gen", "profile", "--app", app("social"), "--knobs", path("knobs.json"), "--out", path("p.csv")});
  EXPECT_EQ(r.code, kExitError);
  EXPECT_NE(r.err.find("error:"), std::string::npos);

  EXPECT_EQ(run({"plan", "--app", app("social"), "--profile", profile("social"), "--demand", "10", "--space",
                 "Q"}).code,
            kExitError);
  EXPECT_EQ(run({"plan", "--app", path("missing.json"), "--profile", profile("social"), "--demand", "10"}).code,
            kExitError);
  EXPECT_EQ(run({"frobnicate"}).code, kExitError);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST_F(Cli, GenTraceAndProfile) {
  auto r = run({"gen", "trace", "--max", "200", "--seed", "4", "--out", path("t.csv")});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  const auto t = load_trace(path("t.csv"));
  EXPECT_EQ(t.demand_rps.size(), 288u);

  const std::vector<std::string> args{"gen",     "profile", "--app", app("ar"), "--knobs",
                                      (apps_dir() / "ar.knobs.json").string(), "--out", path("ar.csv")};
  r = run(args);
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out.rfind("profile ", 0), 0u);
  // The bundled table is this command's output.
  EXPECT_EQ(slurp(path("ar.csv")), slurp(profile("ar")));
  EXPECT_EQ(run(args).out, r.out);
}

TEST_F(Cli, SweepAndSimulate) {
  auto r = run({"sweep", "--app", app("social"), "--profile", profile("social"), "--out", path("s.csv")});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(slurp(path("s.csv")).rfind("space,max_demand_rps", 0), 0u);

  r = run({"simulate", "--app", app("ar"), "--profile", profile("ar"), "--demand", "100", "--duration", "5",
           "--warmup", "1", "--out", path("sim.json"), "--event-log", path("ev.csv")});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  const auto j = nlohmann::json::parse(slurp(path("sim.json")));
  EXPECT_GT(j["arrived"].get<long>(), 0);
  EXPECT_FALSE(slurp(path("ev.csv")).empty());
}

TEST_F(Cli, RunDayWritesEverything) {
  std::ofstream(path("t.csv")) << "bin_index,demand_rps\n0,50\n1,60\n";
  const auto r = run({"run-day", "--app", app("ar"), "--profile", profile("ar"), "--trace", path("t.csv"),
                      "--duration", "3", "--warmup", "1", "--out-dir", path("day")});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  for (const auto* f : {"day_report.csv", "day_long.csv", "sim_reports.json", "manifest.json"})
    EXPECT_TRUE(std::filesystem::exists(dir_ / "day" / f)) << f;
}

TEST_F(Cli, VersionCarriesGeometryHash) {
  const auto r = run({"--version"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.out.rfind("tessera ", 0), 0u);
  EXPECT_NE(r.out.find("geometry"), std::string::npos);
  EXPECT_EQ(r.out.find('\n'), r.out.size() - 1);
  EXPECT_EQ(version_string(), r.out.substr(0, r.out.size() - 1));
}
