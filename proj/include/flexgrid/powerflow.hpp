#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flexgrid/grid.hpp"

namespace flexgrid {

template <typename Scalar>
struct PowerPair
{
  Scalar p;
  Scalar q;
};

/// Sending-end flow of a pi-model branch with series admittance g + jb and
/// shunt susceptance b_sh at the sending end; theta_km = theta_k - theta_m.
template <typename Scalar>
PowerPair<Scalar> line_flow(Scalar g, Scalar b, Scalar b_sh, Scalar u_k, Scalar u_m, Scalar theta_km)
{
  using std::cos;
  using std::sin;
  Scalar const uu = u_k * u_m;
  return {u_k * u_k * g - uu * g * cos(theta_km) - uu * b * sin(theta_km),
          -u_k * u_k * (b + b_sh) + uu * b * cos(theta_km) - uu * g * sin(theta_km)};
}

struct BranchFlow
{
  double p_km = 0.0;
  double q_km = 0.0;
  double p_mk = 0.0;
  double q_mk = 0.0;
  double p_loss = 0.0;
  double q_loss = 0.0;
};

/// Loss identities of a line: p_loss = g|E_k - E_m|^2,
/// q_loss = -b_sh(U_k^2 + U_m^2) - b|E_k - E_m|^2. Throws
/// NumericalConsistencyError when they differ from the flow sums by more
/// than `tolerance`.
PowerPair<double> line_losses(BranchFlow const &flows, std::complex<double> e_k, std::complex<double> e_m, double g,
                              double b, double b_sh, double tolerance = 1e-10);

/// Both directions of a line plus its losses (evaluated from the flows).
BranchFlow line_branch_flow(double g, double b, double b_sh, std::complex<double> e_k, std::complex<double> e_m);

/// In-phase transformer with off-nominal ratio a_km on the k side.
/// p_loss/q_loss are the flow sums P_km + P_mk and Q_km + Q_mk, which equal
/// g|aE_k - E_m|^2 and -b|aE_k - E_m|^2.
BranchFlow inphase_transformer_flow(double a_km, double g, double b, double u_k, double u_m, double theta_km);

/// Reactive loss of an in-phase transformer in the +b|aE_k - E_m|^2 form.
/// It has the opposite sign of Q_km + Q_mk.
double inphase_transformer_q_loss_plus_b(double a_km, double b, std::complex<double> e_k, std::complex<double> e_m);

/// Phase-shifting transformer with complex ratio t = a e^{j phi} on the k side.
BranchFlow phase_shift_transformer_flow(double a_km, double phi_km, double g, double b, double u_k, double u_m,
                                        double theta_km);

struct PowerFlowOptions
{
  int max_iterations = 100;
  double voltage_tolerance = 1e-8;
  double mismatch_tolerance = 1e-8;
  /// Checked on every branch after convergence.
  double identity_tolerance = 1e-9;
};

/// One converged time step. Branches are ordered lines first (topology
/// order) then transformers. Power in per unit of the system base, angles
/// in radians; for transformers k is the MV side.
struct PowerFlowResult
{
  Eigen::VectorXd u;
  Eigen::VectorXd theta;
  std::vector<BranchFlow> branches;
  Eigen::VectorXd loading_pct;
  /// Power drawn from the MV grid by each transformer.
  Eigen::VectorXcd slack_power;
  int iterations = 0;
  double max_mismatch = 0.0;
};

/// Backward/forward sweep for one time step. `load` holds the complex power
/// consumed at each bus (negative real part for net generation), per unit.
/// Throws DivergenceError when the iteration limit is reached.
PowerFlowResult solve_power_flow(Topology const &topology, Eigen::VectorXcd const &load,
                                 PowerFlowOptions const &options = {});

/// Current of a line in amperes from its sending-end apparent power.
double line_current_a(Topology const &topology, Index line, BranchFlow const &flow, double u_k, double u_m);

/// One run, in a flat form that the CSV files reproduce exactly.
struct GridSeries
{
  double dt_hours = 0.25;
  double base_mva = 0.5;
  std::vector<std::string> bus_ids;
  std::vector<std::string> element_ids;
  std::vector<bool> element_is_transformer;
  std::vector<PowerFlowResult> steps;
  /// Total consumption of all units (MW, MVAr) per step, generation excluded.
  Eigen::VectorXd consumption_p;
  Eigen::VectorXd consumption_q;
};

struct ElementLoading
{
  double sum_pct = 0.0;
  double max_pct = 0.0;
};

struct MetricsReport
{
  Index steps = 0;
  double total_load_mwh = 0.0;
  double total_load_mvarh = 0.0;
  double residual_load_mwh = 0.0;
  double residual_load_mvarh = 0.0;
  double active_losses_mw = 0.0;
  double voltage_deviation_sum_pct = 0.0;
  double voltage_deviation_max_pct = 0.0;
  double phase_angle_sum_deg = 0.0;
  ElementLoading lines;
  ElementLoading transformers;
  std::optional<std::string> critical_line;
  ElementLoading critical;
};

/// Element loading sum is the sum over elements of each element's peak
/// loading; max is over all (step, element). The critical-line sum runs
/// over steps.
MetricsReport compute_metrics(GridSeries const &series, std::optional<std::string> const &critical_line = {});

std::string metrics_to_json(MetricsReport const &report);
MetricsReport metrics_from_json(std::string const &text);

/// Writes flows.csv (t, element rows), buses.csv (t, bus rows) and
/// consumption.csv (t rows) into `dir`; reading them back yields a series
/// whose metrics are bit-identical.
void write_grid_series_csv(GridSeries const &series, std::string const &dir);
GridSeries read_grid_series_csv(std::string const &dir, double dt_hours, double base_mva);

} // namespace flexgrid
