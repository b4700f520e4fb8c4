#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "flexgrid/errors.hpp"
#include "flexgrid/pipeline.hpp"

using namespace flexgrid;

namespace {

std::string slurp(std::filesystem::path const &p)
{
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(char const *name)
{
  auto const dir = std::filesystem::temp_directory_path() / ("flexgrid_test_pipeline_" + std::string(name));
  std::filesystem::remove_all(dir);
  return dir;
}

RunConfig small_config(AlgorithmKind kind)
{
  RunConfig c;
  c.scenario = randomized_spec(1);
  c.scenario.horizon = 48;
  c.algorithm = kind;
  return c;
}

StageError run_error(RunConfig const &c)
{
  try {
    run(c);
  } catch (StageError const &e) {
    return e;
  }
  ADD_FAILURE() << "no StageError";
  return StageError(Stage::Output, StageError::Category::Other, "none");
}

} // namespace

TEST(Pipeline, ConfigDefaultsAndRoundTrip)
{
  RunConfig const d = run_config_from_json("{}");
  EXPECT_EQ(d.algorithm, AlgorithmKind::HeuristicGrid);
  EXPECT_EQ(d.scenario.kind, ScenarioKind::Randomized);
  EXPECT_TRUE(d.topology.empty());

  RunConfig c = small_config(AlgorithmKind::CriticalLine);
  c.dispatch.critical_line = "218874";
  c.dispatch.control.kind = ControlMode::Kind::InternalController;
  c.dispatch.control.margin = 0.25;
  c.dispatch.device_order = {"dev003", "dev001"};
  c.power_flow.max_iterations = 17;
  std::string const text = run_config_to_json(c);
  RunConfig const back = run_config_from_json(text);
  EXPECT_EQ(run_config_to_json(back), text);
  EXPECT_EQ(back.dispatch.critical_line, std::optional<std::string>("218874"));
  EXPECT_EQ(back.power_flow.max_iterations, 17);
}

TEST(Pipeline, BadConfigs)
{
  EXPECT_THROW(run_config_from_json(R"({"algorithm": "greedy"})"), ConfigError);
  EXPECT_THROW(run_config_from_json(R"({"dispatch": {"control": {"kind": "manual"}}})"), ConfigError);
  EXPECT_THROW(run_config_from_json(R"({"power_flow": {"max_iterations": 0}})"), ConfigError);
  EXPECT_THROW(run_config_from_json(R"({"dispatch": {"control": {"w1": 0}}})"), ConfigError);
  EXPECT_THROW(run_config_from_json("[1,"), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/config.json"), ConfigError);
}

TEST(Pipeline, NoControlFollowsThermostats)
{
  RunResult const r = run(small_config(AlgorithmKind::NoControl));
  EXPECT_EQ(r.dispatch.stats.solves, 0);
  ASSERT_EQ(r.dispatch.devices.size(), r.scenario.devices.size());
  for (std::size_t i = 0; i < r.scenario.devices.size(); ++i) {
    FlexDevice const &d = r.scenario.devices[i];
    UncontrolledTrajectory const u = simulate_uncontrolled(d.params, d.x0, d.exo, r.scenario.spec.dt_hours);
    EXPECT_EQ(r.dispatch.devices[i].u.head(48), u.v.head(48).cast<double>()) << d.id;
  }
}

TEST(Pipeline, SeriesConsumptionAddsDeviceLoad)
{
  RunResult const r = run(small_config(AlgorithmKind::HeuristicGrid));
  ASSERT_EQ(r.series.steps.size(), 48u);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(48);
  for (auto const &u : r.scenario.units) {
    if (u.type == UnitType::Load) { expected += 1e-3 * u.p.head(48); }
  }
  for (std::size_t i = 0; i < r.scenario.devices.size(); ++i) {
    expected += 1e-3 * r.scenario.devices[i].params.p_rated * r.dispatch.devices[i].u.head(48);
  }
  EXPECT_LE((r.series.consumption_p - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(r.metrics.steps, 48);
  EXPECT_EQ(r.dispatch.violations, 0);
}

TEST(Pipeline, RepeatedRunsAreIdentical)
{
  RunConfig const c = small_config(AlgorithmKind::HeuristicLine);
  EXPECT_EQ(metrics_to_json(run(c).metrics), metrics_to_json(run(c).metrics));
}

TEST(Pipeline, RunDirectoryRecomputes)
{
  auto const dir = scratch("recompute");
  RunConfig c = small_config(AlgorithmKind::HeuristicGrid);
  c.dispatch.critical_line = "218874";
  RunResult const r = run(c);
  write_run(r, dir.string());
  for (char const *f : {"config.json", "scenario.json", "dispatch.json", "metrics.json", "run_info.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  GridSeries const back = read_grid_series_csv(dir.string(), r.series.dt_hours, r.series.base_mva);
  EXPECT_EQ(metrics_to_json(compute_metrics(back, c.dispatch.critical_line)), slurp(dir / "metrics.json"));
  // The stored config reproduces the run.
  RunResult const again = run(load_run_config((dir / "config.json").string()));
  EXPECT_EQ(metrics_to_json(again.metrics), slurp(dir / "metrics.json"));
  std::filesystem::remove_all(dir);
}

TEST(Pipeline, CompareSelfHasNoChange)
{
  auto const dir = scratch("self");
  write_run(run(small_config(AlgorithmKind::NoControl)), dir.string());
  std::string const table = compare_runs(dir.string(), dir.string());
  std::istringstream in(table);
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.rfind("computational time", 0) == 0) { continue; }
    EXPECT_NE(line.find("+0.00%"), std::string::npos) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 12);
  std::filesystem::remove_all(dir);
}

TEST(Pipeline, CompareRejectsDifferentScenarios)
{
  auto const a = scratch("a");
  auto const b = scratch("b");
  RunConfig c = small_config(AlgorithmKind::NoControl);
  write_run(run(c), a.string());
  c.scenario.seed = 2;
  write_run(run(c), b.string());
  EXPECT_THROW(compare_runs(a.string(), b.string()), ConfigError);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(Pipeline, CompareShowsRelativeChange)
{
  MetricsReport a;
  MetricsReport b;
  a.active_losses_mw = 2.0;
  b.active_losses_mw = 1.5;
  std::string const table = compare_table(a, b, "x", "y");
  EXPECT_NE(table.find("-25.00%"), std::string::npos);
}

TEST(Pipeline, StageErrorsCarryExitCodes)
{
  RunConfig c = small_config(AlgorithmKind::HeuristicGrid);
  c.power_flow.max_iterations = 1;
  StageError e = run_error(c);
  EXPECT_EQ(e.stage(), Stage::PowerFlow);
  EXPECT_EQ(e.exit_code(), 4);
  EXPECT_EQ(std::string(e.what()).rfind("[power-flow] ", 0), 0u);

  c = small_config(AlgorithmKind::HeuristicGrid);
  c.dispatch.options.max_sweeps = 1;
  e = run_error(c);
  EXPECT_EQ(e.stage(), Stage::Dispatch);
  EXPECT_EQ(e.exit_code(), 3);

  c = small_config(AlgorithmKind::HeuristicGrid);
  c.topology = "/nonexistent/topology.json";
  e = run_error(c);
  EXPECT_EQ(e.stage(), Stage::Config);
  EXPECT_EQ(e.exit_code(), 2);

  c = small_config(AlgorithmKind::HeuristicGrid);
  c.scenario.feeder_split = {1, 2};
  e = run_error(c);
  EXPECT_EQ(e.stage(), Stage::Scenario);
  EXPECT_EQ(e.exit_code(), 2);
}
