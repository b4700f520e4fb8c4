#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace flexgrid {

using Index = Eigen::Index;

/// Storage-model coefficients are quoted per 15-minute step; losses per hour.
inline constexpr double kReferenceStepHours = 0.25;

enum class DeviceKind
{
  NightStorageHeater,
  StorageWaterBoiler,
  HeatPump,
  Fridge,
  Freezer,
  AirConditioner
};

std::string_view to_string(DeviceKind kind);
DeviceKind device_kind_from_string(std::string_view name);

/// Cooling kinds draw heat out of the store: their input term is negative.
constexpr bool is_cooling(DeviceKind kind)
{
  return kind == DeviceKind::Fridge || kind == DeviceKind::Freezer || kind == DeviceKind::AirConditioner;
}

struct ComfortBand
{
  double t_low;
  double t_up;
  double mid() const { return 0.5 * (t_low + t_up); }
};

/// One flexible load. Powers in kW / kVAr, temperatures in degrees C.
///
/// c_use is the usage coefficient of the kind (c_11 for the heat pump),
/// c_wat the hot-water coefficient (c_12 for the heat pump, unused elsewhere;
/// the boiler's water usage is its c_use). c_los is a fraction per hour;
/// c_use (except litre-based use), c_sol and c_inp act per 15-minute step.
struct DeviceParams
{
  DeviceKind kind = DeviceKind::NightStorageHeater;
  double p_rated = 0.0;
  double q_rated = 0.0;
  double load_factor = 1.0;
  double t_set = 0.0;
  double t_db = 0.0;
  double t_ss = 20.0;
  double t_lol = -10.0;
  double t_hol = 20.0;
  double c_use = 0.0;
  double c_wat = 0.0;
  double c_sol = 0.0;
  double c_los = 0.0;
  double c_inp = 0.0;

  /// T_up = T_set, T_low = T_set - T_db for every kind.
  ComfortBand band() const { return {t_set - t_db, t_set}; }
};

/// Reactive power of a unit from its active power: q = p * sqrt(1/cos^2 - 1).
/// Negative p (generation) yields negative q.
double reactive_from_active(double p, double load_factor);

/// Throws ConfigError when the parameter set violates its invariants.
void validate(DeviceParams const &params);

/// Nominal parameter sets of the six domestic kinds.
DeviceParams nominal_params(DeviceKind kind);

/// Each of c_use, c_wat, c_sol, c_los, c_inp, t_db and p_rated scaled by an
/// independent Uniform(0.9, 1.1) factor; q_rated follows p_rated through the
/// unchanged load factor.
DeviceParams randomize_params(DeviceParams const &nominal, std::uint64_t seed);

/// Time series driving a device over a horizon of T steps.
struct ExogenousSeries
{
  Eigen::VectorXd tem; ///< ambient temperature, degrees C
  Eigen::VectorXd sol; ///< solar irradiance, W/m^2
  Eigen::VectorXd wat; ///< hot water drawn during the step, litres
  Eigen::VectorXd occ; ///< occupancy fraction in [0, 1]

  Index size() const { return tem.size(); }
  void validate() const;
  ExogenousSeries head(Index n) const;

  static ExogenousSeries constant(Index T, double tem, double sol, double wat, double occ);
};

struct ExogenousSample
{
  double tem = 0.0;
  double sol = 0.0;
  double wat = 0.0;
  double occ = 0.0;
};

inline ExogenousSample sample_at(ExogenousSeries const &exo, Index t)
{
  return {exo.tem[t], exo.sol[t], exo.wat[t], exo.occ[t]};
}

struct StepTerms
{
  double out = 0.0;
  double loss = 0.0;
  double inp = 0.0;
};

struct DeviceState
{
  double x = 0.0;
  int v = 0;
};

/// Output, loss and input of one step for the device's kind.
StepTerms step_terms(DeviceParams const &params, DeviceState const &state, ExogenousSample const &exo, int u, int v,
                     double dt_hours);

/// x_{t+1} = x_t - out - loss + inp; v is carried unchanged.
inline DeviceState step_state(DeviceState state, StepTerms const &terms)
{
  state.x = state.x - terms.out - terms.loss + terms.inp;
  return state;
}

/// Hysteresis controller. Heating: on at or below T_low, off at or above T_up.
/// Cooling mirrors. Inside the band the previous switch is held.
int thermostat(DeviceParams const &params, DeviceState const &state);

/// Heat-pump input derating: 1 - clamp((tem - T_LOL)/(T_HOL - T_LOL), 0, 1).
double heat_pump_derating(DeviceParams const &params, double tem);

struct UncontrolledTrajectory
{
  Eigen::VectorXd x;  ///< x_0 .. x_T
  Eigen::VectorXi v;  ///< thermostat switch at t = 0 .. T-1
  Eigen::VectorXd p;  ///< kW drawn during step t
  Eigen::VectorXd q;  ///< kVAr drawn during step t
  double max_drift = 0.0; ///< max single-step |-out - loss + inp|
  int band_escapes = 0;   ///< steps outside band +/- max_drift (model inconsistency)
};

/// Device left to its thermostat with the external switch held on.
UncontrolledTrajectory simulate_uncontrolled(DeviceParams const &params, double x0, ExogenousSeries const &exo,
                                             double dt_hours);

/// Iterated storage recursion for an imposed switch sequence (v = 1).
/// Returns x_0 .. x_T with T = switches.size().
Eigen::VectorXd simulate_switched(DeviceParams const &params, double x0, ExogenousSeries const &exo,
                                  std::span<double const> switches, double dt_hours);

/// The storage recursion written as x_{t+1} = decay * x_t + drift_t + gain_t * u_t.
///
/// drift and gain are the per-kind expansions of the loss/usage/input terms
/// (for heating kinds drift = c_los T_ss - out, for the fridge/freezer
/// drift = c_use occ + c_los T_ss, for the air conditioner the ambient
/// temperature replaces T_ss and solar gain enters the drift).
struct AffineDynamics
{
  double decay = 1.0;
  Eigen::VectorXd drift;
  Eigen::VectorXd gain;

  Index size() const { return drift.size(); }
};

AffineDynamics affine_dynamics(DeviceParams const &params, ExogenousSeries const &exo, double dt_hours);

/// Non-recursive state after applying switches u_0..u_t:
///   x_{t+1} = x_0 decay^{t+1} + sum_{n=0}^{t} (drift_n + gain_n u_n) decay^{t-n}.
template <typename Scalar>
Scalar closed_form_state(AffineDynamics const &dyn, Scalar x0, std::span<double const> switches, Index t)
{
  Scalar const decay = static_cast<Scalar>(dyn.decay);
  Scalar acc = x0 * std::pow(decay, static_cast<Scalar>(t + 1));
  for (Index n = 0; n <= t; ++n) {
    Scalar const term = static_cast<Scalar>(dyn.drift[n]) + static_cast<Scalar>(dyn.gain[n]) * static_cast<Scalar>(switches[n]);
    acc += term * std::pow(decay, static_cast<Scalar>(t - n));
  }
  return acc;
}

double closed_form_state(DeviceParams const &params, double x0, ExogenousSeries const &exo,
                         std::span<double const> switches, Index t, double dt_hours);

/// Documented behaviour of the nominal kinds that the coefficients do not reproduce.
std::vector<std::string> behaviour_discrepancies();

/// Device entry of a fleet file: {kind, bus_id, seed, overrides{...}}.
struct FleetEntry
{
  std::string id;
  std::string bus_id;
  std::optional<std::uint64_t> seed;
  DeviceParams params;
};

std::vector<FleetEntry> parse_fleet(std::string const &json_text);
std::vector<FleetEntry> load_fleet(std::string const &path);

/// Applies a named coefficient override; throws ConfigError for unknown names.
void apply_override(DeviceParams &params, std::string_view name, double value);

} // namespace flexgrid
