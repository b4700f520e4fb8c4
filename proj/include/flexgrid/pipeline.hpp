#pragma once

#include <optional>
#include <string>

#include "flexgrid/algorithms.hpp"
#include "flexgrid/grid.hpp"
#include "flexgrid/powerflow.hpp"
#include "flexgrid/scenarios.hpp"

namespace flexgrid {

/// Everything a run depends on. Serialized into the run directory so a run
/// can be repeated from its own output.
struct RunConfig
{
  /// Topology JSON path; empty uses the built-in default grid.
  std::string topology;
  ScenarioSpec scenario = randomized_spec(1);
  AlgorithmKind algorithm = AlgorithmKind::HeuristicGrid;
  AlgorithmConfig dispatch;
  PowerFlowOptions power_flow;
};

std::string run_config_to_json(RunConfig const &config);
/// Missing keys keep their defaults; unknown names throw ConfigError.
RunConfig run_config_from_json(std::string const &text);
RunConfig load_run_config(std::string const &path);

/// Stage in which a run failed.
enum class Stage
{
  Config,
  Scenario,
  Dispatch,
  PowerFlow,
  Metrics,
  Output
};

std::string_view to_string(Stage stage);

/// A pipeline failure: the original error's category plus the stage.
class StageError : public std::runtime_error
{
public:
  enum class Category
  {
    Config,
    Solver,
    Divergence,
    Other
  };

  StageError(Stage stage, Category category, std::string const &what)
      : std::runtime_error("[" + std::string(to_string(stage)) + "] " + what), stage_(stage), category_(category)
  {
  }
  Stage stage() const { return stage_; }
  Category category() const { return category_; }
  /// 2 config, 3 solver, 4 power-flow divergence, 1 anything else.
  int exit_code() const;

private:
  Stage stage_;
  Category category_;
};

struct RunResult
{
  RunConfig config;
  Scenario scenario;
  DispatchResult dispatch;
  GridSeries series;
  MetricsReport metrics;
};

/// Power flow at every step on the controlled per-bus profile (MW, MVAr).
/// Total consumption adds the device load to the scenario's load units.
GridSeries grid_series(Topology const &topology, Scenario const &scenario, DispatchResult const &dispatch,
                       PowerFlowOptions const &options = {});

/// Generate scenario, dispatch, power flow and metrics. Errors are rethrown
/// as StageError.
RunResult run(RunConfig const &config);
/// Same, on an already generated scenario.
RunResult run(RunConfig const &config, Scenario scenario);

/// Writes config.json, scenario.json, dispatch.json, metrics.json,
/// run_info.json and the power-flow CSVs into `dir` (created if missing).
void write_run(RunResult const &result, std::string const &dir);

/// Side-by-side metrics of two runs of the same scenario, one row per
/// metric with both values and the relative change of b against a.
/// Throws ConfigError when the runs' scenarios differ.
std::string compare_runs(std::string const &dir_a, std::string const &dir_b);
std::string compare_table(MetricsReport const &a, MetricsReport const &b, std::string const &label_a,
                          std::string const &label_b);

} // namespace flexgrid
