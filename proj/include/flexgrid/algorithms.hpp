#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "flexgrid/devices.hpp"
#include "flexgrid/grid.hpp"
#include "flexgrid/scheduling.hpp"

namespace flexgrid {

enum class AlgorithmKind
{
  NoControl,
  OptimalGrid,
  HeuristicGrid,
  OptimalLine,
  HeuristicLine,
  CriticalLine
};

std::string_view to_string(AlgorithmKind kind);
AlgorithmKind algorithm_kind_from_string(std::string_view name);

/// A flexible load placed at a bus.
struct FlexDevice
{
  std::string id;
  std::string bus;
  DeviceParams params;
  double x0 = 0.0;
  ExogenousSeries exo;
};

struct AlgorithmConfig
{
  ObjectiveKind objective = ObjectiveKind::SumNormQuadratic;
  PowerMode power_mode = PowerMode::Both;
  ControlMode control;
  VariableMode variable_mode = VariableMode::Binary;
  bool integer_slack = false;
  SolverOptions options;
  /// Device kW times this factor is the residual's unit (MW by default).
  double power_scale = 1e-3;
  std::optional<std::string> critical_line;
  /// Ids dispatched first, in this order, by the sequential algorithms;
  /// the rest follow the default flexibility ordering.
  std::vector<std::string> device_order;
};

/// Residual loads (consumption minus generation, not counting flexible
/// devices) per bus and step, in the residual's unit.
struct DispatchInput
{
  Topology const *topology = nullptr;
  double dt_hours = kReferenceStepHours;
  Eigen::MatrixXd residual_p; ///< buses x T
  Eigen::MatrixXd residual_q; ///< buses x T
  std::vector<FlexDevice> devices;

  Index horizon() const { return residual_p.cols(); }
  /// Throws ConfigError on unknown buses, shape mismatches or short series.
  void validate() const;
};

struct DeviceDispatch
{
  std::string id;
  std::string bus;
  Eigen::VectorXd u;
  Eigen::VectorXd slacks;
  double max_violation = 0.0;
  Index violations = 0;
  bool exact = false;
  bool relaxed_fallback = false;
};

struct DispatchStats
{
  int solves = 0;
  int exact_solves = 0;
  int relaxed_fallbacks = 0;
  SolveStats solver;
};

struct DispatchResult
{
  AlgorithmKind kind = AlgorithmKind::NoControl;
  /// Order in which devices were dispatched (input order for joint solves).
  std::vector<std::string> order;
  std::vector<DeviceDispatch> devices; ///< input order
  Eigen::MatrixXd controlled_p;        ///< buses x T, residual plus device load
  Eigen::MatrixXd controlled_q;
  double solve_seconds = 0.0;
  DispatchStats stats;
  Index violations = 0;
  double max_violation = 0.0;
};

/// Devices follow their own thermostats.
DispatchResult no_control(DispatchInput const &input, AlgorithmConfig const &config);
/// One joint solve per feeder against the feeder's aggregate residual.
DispatchResult optimal_grid(DispatchInput const &input, AlgorithmConfig const &config);
/// One device at a time against the feeder residual, which absorbs each
/// schedule before the next solve.
DispatchResult heuristic_grid(DispatchInput const &input, AlgorithmConfig const &config);
/// One joint solve per feeder over the flows of the transformer and of every
/// line (each the sum of its downstream residuals).
DispatchResult optimal_line(DispatchInput const &input, AlgorithmConfig const &config);
/// Backward sweep: the deepest buses first, each bus's devices dispatched
/// against the residual accumulated below and at that bus.
DispatchResult heuristic_line(DispatchInput const &input, AlgorithmConfig const &config);
/// Devices below the critical line first against that line's flow, then the
/// rest against their feeder. Without a critical line this is heuristic_grid.
DispatchResult critical_line(DispatchInput const &input, AlgorithmConfig const &config);

DispatchResult dispatch(AlgorithmKind kind, DispatchInput const &input, AlgorithmConfig const &config);

/// Energy capacity of the comfort band (kWh) times rated power (kW).
double flexibility(DeviceParams const &params);
/// Dispatch order of the given device indices: configured ids first, then by
/// descending flexibility, ties by id.
std::vector<Index> heuristic_order(std::vector<FlexDevice> const &devices, std::vector<Index> const &subset,
                                   std::vector<std::string> const &preferred = {});

/// Feeder aggregates (feeders x T) of a per-bus profile.
Eigen::MatrixXd feeder_totals(Topology const &topology, Eigen::MatrixXd const &per_bus);
/// Lossless line flows (lines x T): the sum over each line's downstream buses.
Eigen::MatrixXd line_totals(Topology const &topology, Eigen::MatrixXd const &per_bus);

/// Objective of the grid algorithms evaluated on a result: the norm of every
/// feeder aggregate plus all device slacks.
double grid_objective(DispatchInput const &input, AlgorithmConfig const &config, DispatchResult const &result);
/// Objective of the line algorithms: the norm over transformer and line
/// flows of each feeder plus all device slacks.
double line_objective(DispatchInput const &input, AlgorithmConfig const &config, DispatchResult const &result);

std::string dispatch_to_json(DispatchResult const &result);

} // namespace flexgrid
