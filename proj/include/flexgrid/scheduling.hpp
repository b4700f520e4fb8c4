#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "flexgrid/devices.hpp"

namespace flexgrid {

enum class ObjectiveKind
{
  SumNormQuadratic,
  EuclideanNorm,
  MaxNorm,
  ApproxLinearGradient
};

enum class PowerMode
{
  Active,
  Reactive,
  Both
};

enum class VariableMode
{
  Binary,
  RelaxedRounded
};

std::string_view to_string(ObjectiveKind kind);
std::string_view to_string(PowerMode mode);
std::string_view to_string(VariableMode mode);
ObjectiveKind objective_kind_from_string(std::string_view name);
PowerMode power_mode_from_string(std::string_view name);
VariableMode variable_mode_from_string(std::string_view name);

/// Weights of the comfort slacks. Under FullControl the band is [T_low, T_up]
/// with both sides weighted by w1. InternalController keeps a margin to the
/// side where the device's own thermostat would cut in (upper side for
/// heating, lower side for cooling), softened with w2.
struct ControlMode
{
  enum class Kind
  {
    FullControl,
    InternalController
  };

  Kind kind = Kind::FullControl;
  double w1 = 1e6;
  double w2 = 1e3;
  std::optional<double> margin; ///< defaults to t_db / 4

  static ControlMode full_control(double w1 = 1e6) { return {Kind::FullControl, w1, 1e3, std::nullopt}; }
  static ControlMode internal_controller(double w1 = 1e6, double w2 = 1e3) { return {Kind::InternalController, w1, w2, std::nullopt}; }
};

struct SolverOptions
{
  Index exact_single_bits = 20; ///< single-device Binary solved exactly up to this horizon
  Index exact_joint_bits = 24;  ///< joint Binary solved exactly up to devices * T bits
  double tolerance = 1e-8;
  int max_sweeps = 1000;
  int max_cycles = 1000;
  bool polish = true;
};

/// One device inside a scheduling problem. Its power enters every listed
/// channel (grid algorithms use a single channel; line algorithms one channel
/// per branch on the device's path).
struct ScheduledDevice
{
  std::string id;
  DeviceParams params;
  double x0 = 0.0;
  ExogenousSeries exo;
  std::vector<Index> channels{0};
};

/// Residual profiles are channels x T matrices in the problem's power unit:
/// device kW / kVAr are multiplied by `power_scale` (1e-3 schedules in MW).
struct ScheduleProblem
{
  Index horizon = 0;
  double dt_hours = kReferenceStepHours;
  double power_scale = 1e-3;
  Eigen::MatrixXd r_act;
  Eigen::MatrixXd r_react;
  std::vector<ScheduledDevice> devices;
  ObjectiveKind objective = ObjectiveKind::SumNormQuadratic;
  PowerMode power_mode = PowerMode::Both;
  ControlMode control;
  VariableMode variable_mode = VariableMode::Binary;
  /// Slacks restricted to non-negative integers (a_t = ceil(w * violation)).
  bool integer_slack = false;
  SolverOptions options;

  Index channel_count() const { return r_act.rows(); }
  /// Throws ConfigError on shape mismatches or invalid devices.
  void validate() const;
};

/// Comfort constraints of one device expressed in its switch sequence:
/// x_{t+1} = base[t] + sum_{n<=t} coeff(t, n) u_n, required in
/// [lo[t] - a_t / w_lo[t], hi[t] + a_t / w_hi[t]] for t = 0..T-1.
/// The last row carries the terminal rule (at least half full for heating,
/// at most half full for cooling).
struct ComfortConstraints
{
  AffineDynamics dynamics;
  double x0 = 0.0;
  Eigen::VectorXd base;
  Eigen::MatrixXd coeff;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  Eigen::VectorXd w_lo;
  Eigen::VectorXd w_hi;

  Index size() const { return lo.size(); }
  /// Slack needed for state x at row t.
  double slack(Index t, double x, bool integer) const;
};

ComfortConstraints feasibility_bounds(ScheduledDevice const &device, ControlMode const &control, Index horizon,
                                      double dt_hours);

/// Objective of a single-channel problem. `p`, `q` are the per-device
/// coefficients (already in the residual's unit), `u` is devices x T.
double objective_value(ObjectiveKind kind, PowerMode mode, Eigen::VectorXd const &r_act, Eigen::VectorXd const &r_react,
                       Eigen::VectorXd const &p, Eigen::VectorXd const &q, Eigen::MatrixXd const &u, double slack_sum);

struct Evaluation
{
  double objective = 0.0;
  double norm = 0.0;
  double slack_sum = 0.0;
  Eigen::MatrixXd slacks; ///< devices x T
  Eigen::MatrixXd states; ///< devices x (T + 1)
  double max_violation = 0.0; ///< degrees C beyond the (unslacked) bounds
  Index violations = 0;
};

Evaluation evaluate(ScheduleProblem const &problem, Eigen::MatrixXd const &u);

struct SolveStats
{
  std::uint64_t nodes = 0;
  std::uint64_t leaves = 0;
  int sweeps = 0;
  int cycles = 0;
  int repair_flips = 0;
  int polish_moves = 0;
};

struct Schedule
{
  Eigen::MatrixXd u;      ///< devices x T
  Eigen::MatrixXd slacks; ///< devices x T
  double objective = 0.0;
  double max_violation = 0.0;
  Index violations = 0;
  bool exact = false;
  /// Binary requested but the instance exceeded the exact budget.
  bool relaxed_fallback = false;
  SolveStats stats;
};

/// Dispatches to the exact or relaxed path according to the problem's
/// variable mode and the exact budgets.
Schedule solve(ScheduleProblem const &problem);
Schedule solve_single_device(ScheduleProblem const &problem);
Schedule solve_multi_device(ScheduleProblem const &problem);

/// Exhaustive enumeration; ties broken toward the lexicographically smallest
/// u read device by device. Throws SolverError above `max_bits`.
Schedule brute_force_oracle(ScheduleProblem const &problem, Index max_bits = 24);

/// Depth-first branch and bound with the same tie-break as the oracle.
Schedule branch_and_bound(ScheduleProblem const &problem);

/// Fractional optimum of the penalized relaxation over u in [0,1]
/// (block coordinate descent over devices, coordinate descent within).
Eigen::MatrixXd relaxed_solve(ScheduleProblem const &problem, SolveStats *stats = nullptr);

/// Threshold at 0.5 (ties round up), then flip single bits while a flip
/// lowers the device's comfort penalty, largest reduction first, earliest
/// step on ties.
Eigen::MatrixXd round_and_repair(ScheduleProblem const &problem, Eigen::MatrixXd const &fractional,
                                 SolveStats *stats = nullptr);

/// Single-flip and swap local search on the full objective.
Eigen::MatrixXd polish(ScheduleProblem const &problem, Eigen::MatrixXd const &binary, SolveStats *stats = nullptr);

/// Coarse duty cycles d (one per coarse step of `k` fine steps) to a binary
/// fine-step signal with round(d k) on-steps placed first in each block.
Eigen::VectorXd distribute_coarse(Eigen::VectorXd const &duty, Index k);

std::string problem_to_json(ScheduleProblem const &problem);
ScheduleProblem problem_from_json(std::string const &text);
std::string schedule_to_json(Schedule const &schedule);

} // namespace flexgrid
