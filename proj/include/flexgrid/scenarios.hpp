#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "flexgrid/algorithms.hpp"
#include "flexgrid/devices.hpp"
#include "flexgrid/grid.hpp"
#include "flexgrid/random.hpp"

namespace flexgrid {

enum class ScenarioKind
{
  Randomized,
  Regular
};

std::string_view to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(std::string_view name);

enum class UnitType
{
  Load,
  Pv,
  Wind
};

std::string_view to_string(UnitType type);

struct ScenarioSpec
{
  ScenarioKind kind = ScenarioKind::Randomized;
  std::uint64_t seed = 1;
  Index horizon = 96;
  Index devices = 30;
  double dt_hours = kReferenceStepHours;
  /// Share of device energy (thermostat operation) in total consumption.
  double controllable_share = 0.31;
  /// Generated energy relative to total consumption.
  double generation_share = 0.35;
  /// Devices per feeder in topology order; empty spreads them over all buses.
  std::vector<Index> feeder_split;
  std::vector<DeviceKind> device_kinds;
  /// Optional profile CSV paths (regular only); empty uses the shipped ones.
  std::string pv_profile;
  std::string wind_profile;
  std::string load_profile;
};

/// One day, 30 devices of all six kinds, 19/6/5 over the three feeders.
ScenarioSpec randomized_spec(std::uint64_t seed);
/// Three days, 150 devices without air conditioners on all buses.
ScenarioSpec regular_spec(std::uint64_t seed);

/// A non-controllable unit. Series in kW / kVAr with consumption positive;
/// generation units carry negative p and q.
struct Unit
{
  std::string id;
  std::string bus;
  UnitType type = UnitType::Load;
  double rating_kw = 0.0;
  double load_factor = 1.0;
  Eigen::VectorXd p;
  Eigen::VectorXd q;
};

struct Scenario
{
  ScenarioSpec spec;
  std::vector<Unit> units;
  std::vector<FlexDevice> devices;
  /// Achieved controllable share under thermostat operation.
  double controllable_share = 0.0;
};

/// Normalized profiles in [0, 1], one value per step.
struct Profiles
{
  Eigen::VectorXd pv;
  Eigen::VectorXd wind;
  Eigen::VectorXd load;
};

/// Clipped sine for solar with daily weather factors, smoothed random walk
/// for wind and a double-peak weekday curve for load.
Profiles synthetic_profiles(Index steps, std::uint64_t seed);
/// The shipped profiles: synthetic_profiles(288, kShippedProfileSeed)
/// written with six decimals.
Profiles default_profiles();
inline constexpr std::uint64_t kShippedProfileSeed = 20240601;

/// Profile CSV: header "step,value", one row per step.
Eigen::VectorXd parse_profile_csv(std::string const &text);
Eigen::VectorXd load_profile_csv(std::string const &path);
std::string profile_to_csv(Eigen::VectorXd const &profile);

Scenario generate_randomized(ScenarioSpec const &spec, Topology const &topology);
Scenario generate_regular(ScenarioSpec const &spec, Topology const &topology, Profiles const &profiles);
/// Dispatches on the scenario kind; regular scenarios read the configured
/// profile paths or fall back to the shipped profiles.
Scenario generate_scenario(ScenarioSpec const &spec, Topology const &topology);

/// Outdoor temperature shared by all households of a scenario: a daily
/// sine around the mean (coldest at 3 h) plus one offset per day.
Eigen::VectorXd ambient_series(Rng &rng, Index steps, double dt_hours, double mean_temperature);

/// One household's temperature (shared ambient plus local noise),
/// irradiance, hot-water draws and occupancy over `steps` steps.
ExogenousSeries household_series(Rng &rng, Index steps, double dt_hours, Eigen::VectorXd const &pv_profile,
                                 Eigen::VectorXd const &ambient);

/// Residual of the non-controllable units per bus (MW, MVAr), buses x T.
void unit_residuals(Scenario const &scenario, Topology const &topology, Eigen::MatrixXd &p_mw, Eigen::MatrixXd &q_mvar);
DispatchInput dispatch_input(Scenario const &scenario, Topology const &topology);
/// Consumption of the load units (MW, MVAr) per step, generation excluded.
void unit_consumption(Scenario const &scenario, Eigen::VectorXd &p_mw, Eigen::VectorXd &q_mvar);

std::string scenario_to_json(Scenario const &scenario);
Scenario scenario_from_json(std::string const &text);
std::string spec_to_json(ScenarioSpec const &spec);
ScenarioSpec spec_from_json(std::string const &text);

} // namespace flexgrid
