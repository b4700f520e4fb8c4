#include "flexgrid/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "flexgrid/errors.hpp"
#include "flexgrid/random.hpp"
#include "flexgrid/default_profiles_data.hpp"
#include "json_io.hpp"

namespace flexgrid {

std::string_view to_string(ScenarioKind kind) { return kind == ScenarioKind::Randomized ? "randomized" : "regular"; }

ScenarioKind scenario_kind_from_string(std::string_view name)
{
  if (name == "randomized") { return ScenarioKind::Randomized; }
  if (name == "regular") { return ScenarioKind::Regular; }
  throw ConfigError("unknown scenario kind '" + std::string(name) + "'");
}

std::string_view to_string(UnitType type)
{
  switch (type) {
  case UnitType::Load: return "load";
  case UnitType::Pv: return "pv";
  case UnitType::Wind: return "wind";
  }
  return "unknown";
}

namespace {

UnitType unit_type_from_string(std::string_view name)
{
  if (name == "load") { return UnitType::Load; }
  if (name == "pv") { return UnitType::Pv; }
  if (name == "wind") { return UnitType::Wind; }
  throw ConfigError("unknown unit type '" + std::string(name) + "'");
}

double hour_of(Index t, double dt_hours) { return std::fmod(static_cast<double>(t) * dt_hours, 24.0); }

} // namespace

ScenarioSpec randomized_spec(std::uint64_t seed)
{
  ScenarioSpec s;
  s.kind = ScenarioKind::Randomized;
  s.seed = seed;
  s.horizon = 96;
  s.devices = 30;
  s.controllable_share = 0.31;
  s.generation_share = 0.35;
  s.feeder_split = {19, 6, 5};
  s.device_kinds = {DeviceKind::NightStorageHeater, DeviceKind::StorageWaterBoiler, DeviceKind::HeatPump,
                    DeviceKind::Fridge,             DeviceKind::Freezer,            DeviceKind::AirConditioner};
  return s;
}

ScenarioSpec regular_spec(std::uint64_t seed)
{
  ScenarioSpec s;
  s.kind = ScenarioKind::Regular;
  s.seed = seed;
  s.horizon = 288;
  s.devices = 150;
  s.controllable_share = 0.51;
  s.generation_share = 1.0;
  s.device_kinds = {DeviceKind::NightStorageHeater, DeviceKind::StorageWaterBoiler, DeviceKind::HeatPump,
                    DeviceKind::Fridge, DeviceKind::Freezer};
  return s;
}

Profiles synthetic_profiles(Index steps, std::uint64_t seed)
{
  Rng const root(seed);
  double const dt = kReferenceStepHours;
  Index const per_day = static_cast<Index>(std::lround(24.0 / dt));
  Profiles p;
  p.pv = Eigen::VectorXd::Zero(steps);
  p.wind = Eigen::VectorXd::Zero(steps);
  p.load = Eigen::VectorXd::Zero(steps);

  Rng sun = root.stream("pv");
  double day_factor = 1.0;
  double cloud = 1.0;
  for (Index t = 0; t < steps; ++t) {
    if (t % per_day == 0) { day_factor = sun.uniform(0.55, 1.0); }
    cloud = 0.85 * cloud + 0.15 * sun.uniform(0.6, 1.0);
    double const h = hour_of(t, dt);
    double const shape = h > 6.0 && h < 20.0 ? std::sin(std::numbers::pi * (h - 6.0) / 14.0) : 0.0;
    p.pv[t] = std::clamp(shape * day_factor * cloud, 0.0, 1.0);
  }

  Rng air = root.stream("wind");
  double w = 0.4;
  for (Index t = 0; t < steps; ++t) {
    w = std::clamp(0.97 * w + 0.03 * 0.45 + 0.04 * air.normal(), 0.0, 1.0);
    p.wind[t] = w;
  }

  Rng use = root.stream("load");
  for (Index t = 0; t < steps; ++t) {
    double const h = hour_of(t, dt);
    auto bump = [h](double centre, double width) { return std::exp(-std::pow((h - centre) / width, 2.0)); };
    p.load[t] = 0.3 + 0.25 * bump(7.5, 1.2) + 0.12 * bump(12.5, 1.5) + 0.45 * bump(19.0, 1.8);
    p.load[t] *= use.uniform(0.97, 1.03);
  }
  p.load /= p.load.maxCoeff();
  return p;
}

Eigen::VectorXd parse_profile_csv(std::string const &text)
{
  std::istringstream in(text);
  std::string line;
  std::vector<double> values;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') { line.pop_back(); }
    if (line.empty()) { continue; }
    if (header) {
      header = false;
      if (line.rfind("step", 0) == 0) { continue; }
    }
    auto const comma = line.find(',');
    if (comma == std::string::npos) { throw ConfigError("profile: expected 'step,value' in line '" + line + "'"); }
    try {
      std::size_t used = 0;
      long long const step = std::stoll(line.substr(0, comma), &used);
      if (step != static_cast<long long>(values.size())) { throw ConfigError("profile: steps must count up from 0"); }
      double const v = std::stod(line.substr(comma + 1), &used);
      if (!std::isfinite(v)) { throw ConfigError("profile: non-finite value"); }
      values.push_back(v);
    } catch (std::logic_error const &) {
      throw ConfigError("profile: malformed line '" + line + "'");
    }
  }
  if (values.empty()) { throw ConfigError("profile: no values"); }
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
}

Eigen::VectorXd load_profile_csv(std::string const &path)
{
  std::ifstream f(path);
  if (!f) { throw ConfigError("cannot open profile '" + path + "'"); }
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_profile_csv(ss.str());
}

std::string profile_to_csv(Eigen::VectorXd const &profile)
{
  std::string out = "step,value\n";
  char buf[64];
  for (Index t = 0; t < profile.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%lld,%.6f\n", static_cast<long long>(t), profile[t]);
    out += buf;
  }
  return out;
}

Profiles default_profiles()
{
  return {parse_profile_csv(detail::kPvProfileCsv), parse_profile_csv(detail::kWindProfileCsv),
          parse_profile_csv(detail::kLoadProfileCsv)};
}

Eigen::VectorXd ambient_series(Rng &rng, Index steps, double dt_hours, double mean_temperature)
{
  Eigen::VectorXd tem(steps);
  Index const per_day = static_cast<Index>(std::lround(24.0 / dt_hours));
  double day_offset = 0.0;
  for (Index t = 0; t < steps; ++t) {
    if (t % per_day == 0) { day_offset = rng.normal(); }
    double const h = hour_of(t, dt_hours);
    tem[t] = mean_temperature + day_offset + 4.0 * std::sin(2.0 * std::numbers::pi * (h - 9.0) / 24.0);
  }
  return tem;
}

ExogenousSeries household_series(Rng &rng, Index steps, double dt_hours, Eigen::VectorXd const &pv_profile,
                                 Eigen::VectorXd const &ambient)
{
  if (pv_profile.size() < steps || ambient.size() < steps) {
    throw ConfigError("household series: weather shorter than horizon");
  }
  ExogenousSeries e = ExogenousSeries::constant(steps, 0.0, 0.0, 0.0, 0.0);
  for (Index t = 0; t < steps; ++t) {
    double const h = hour_of(t, dt_hours);
    e.tem[t] = ambient[t] + 0.3 * rng.normal();
    e.sol[t] = 700.0 * pv_profile[t];
    bool const busy = (h >= 6.0 && h < 9.0) || (h >= 18.0 && h < 22.0);
    e.wat[t] = rng.uniform() < (busy ? 0.3 : 0.03) ? rng.exponential(12.0) : 0.0;
    double const occ = h >= 22.0 || h < 7.0 ? 0.9 : (h >= 8.0 && h < 17.0 ? 0.4 : 0.8);
    e.occ[t] = std::clamp(occ + rng.uniform(-0.1, 0.1), 0.0, 1.0);
  }
  return e;
}

namespace {

std::vector<Index> non_root_buses(Topology const &topo, std::optional<Index> feeder)
{
  std::vector<Index> out;
  for (Index b = 0; b < topo.bus_count(); ++b) {
    if (!topo.parent_line(b)) { continue; }
    if (feeder && topo.feeder_of_bus(b) != *feeder) { continue; }
    out.push_back(b);
  }
  return out;
}

std::string numbered(std::string_view prefix, std::size_t k)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", std::string(prefix).c_str(), k);
  return buf;
}

/// Devices with randomized parameters, placed as the scenario kind prescribes and
/// started at a uniform state inside their band.
std::vector<FlexDevice> place_devices(ScenarioSpec const &spec, Topology const &topo, Eigen::VectorXd const &pv,
                                      double mean_temperature)
{
  Rng weather = Rng(spec.seed).stream("ambient");
  Eigen::VectorXd const winter = ambient_series(weather, spec.horizon, spec.dt_hours, mean_temperature);
  // Air conditioners only cool; their households see a summer climate.
  Eigen::VectorXd const summer = ambient_series(weather, spec.horizon, spec.dt_hours, 26.0);
  if (spec.device_kinds.empty() && spec.devices > 0) { throw ConfigError("scenario: no device kinds"); }
  Rng const root(spec.seed);
  std::vector<Index> bus_of;
  if (!spec.feeder_split.empty()) {
    if (static_cast<Index>(spec.feeder_split.size()) != topo.feeder_count()) {
      throw ConfigError("scenario: feeder split needs one count per feeder");
    }
    Index total = 0;
    for (Index c : spec.feeder_split) { total += c; }
    if (total != spec.devices) { throw ConfigError("scenario: feeder split does not add up to the device count"); }
    Rng rng = root.stream("placement");
    for (Index f = 0; f < topo.feeder_count(); ++f) {
      std::vector<Index> const buses = non_root_buses(topo, f);
      for (Index k = 0; k < spec.feeder_split[f]; ++k) { bus_of.push_back(buses[rng.index(buses.size())]); }
    }
  } else {
    Rng rng = root.stream("placement");
    std::vector<Index> const buses = non_root_buses(topo, std::nullopt);
    for (Index k = 0; k < spec.devices; ++k) { bus_of.push_back(buses[rng.index(buses.size())]); }
  }
  std::vector<FlexDevice> devices;
  for (Index k = 0; k < spec.devices; ++k) {
    FlexDevice d;
    d.id = numbered("dev", static_cast<std::size_t>(k));
    d.bus = topo.buses()[bus_of[k]].id;
    DeviceKind const kind = spec.device_kinds[static_cast<std::size_t>(k) % spec.device_kinds.size()];
    Rng rng = root.stream("device", static_cast<std::uint64_t>(k));
    d.params = randomize_params(nominal_params(kind), rng.next_u64());
    ComfortBand const band = d.params.band();
    d.x0 = rng.uniform(band.t_low, band.t_up);
    d.exo = household_series(rng, spec.horizon, spec.dt_hours, pv, kind == DeviceKind::AirConditioner ? summer : winter);
    devices.push_back(std::move(d));
  }
  return devices;
}

double thermostat_energy(std::vector<FlexDevice> const &devices, double dt_hours)
{
  double e = 0.0;
  for (auto const &d : devices) { e += simulate_uncontrolled(d.params, d.x0, d.exo, dt_hours).p.sum() * dt_hours; }
  return e;
}

double energy(std::vector<Unit> const &units, UnitType type, double dt_hours)
{
  double e = 0.0;
  for (auto const &u : units) {
    if (u.type == type) { e += u.p.sum() * dt_hours; }
  }
  return e;
}

void rescale(std::vector<Unit> &units, UnitType type, double factor)
{
  for (auto &u : units) {
    if (u.type != type) { continue; }
    u.rating_kw *= factor;
    u.p *= factor;
  }
}

/// Scales the load units to the controllable share and the generators to
/// the generation share, then derives reactive power from the load factors.
void calibrate(Scenario &s, std::vector<std::pair<UnitType, double>> const &generation_split)
{
  double const dt = s.spec.dt_hours;
  double const device_energy = thermostat_energy(s.devices, dt);
  double const share = s.spec.controllable_share;
  if (!(share > 0.0 && share < 1.0)) { throw ConfigError("scenario: controllable share must lie in (0, 1)"); }
  double const load_raw = energy(s.units, UnitType::Load, dt);
  if (load_raw > 0.0 && device_energy > 0.0) {
    rescale(s.units, UnitType::Load, device_energy * (1.0 - share) / share / load_raw);
  }
  double const consumption = device_energy + energy(s.units, UnitType::Load, dt);
  for (auto const &[type, part] : generation_split) {
    double const raw = -energy(s.units, type, dt);
    if (raw > 0.0) { rescale(s.units, type, s.spec.generation_share * part * consumption / raw); }
  }
  for (auto &u : s.units) {
    u.q = u.p.unaryExpr([&](double p) { return reactive_from_active(p, u.load_factor); });
  }
  double const total = device_energy + energy(s.units, UnitType::Load, dt);
  s.controllable_share = total > 0.0 ? device_energy / total : 0.0;
}

struct UnitLayout
{
  Index loads_per_bus = 2;
  double pv_probability = 0.0;
  double wind_probability = 0.3;
};

/// Units per bus; at least one generator of each used type per feeder.
std::vector<Unit> lay_out_units(ScenarioSpec const &spec, Topology const &topo, UnitLayout const &layout)
{
  Rng rng = Rng(spec.seed).stream("units");
  std::vector<Unit> units;
  auto add = [&](UnitType type, Index bus) {
    Unit u;
    u.id = numbered(std::string(to_string(type)), units.size());
    u.bus = topo.buses()[bus].id;
    u.type = type;
    u.rating_kw = rng.uniform(0.8, 1.2);
    u.load_factor = rng.uniform(0.8, 1.0);
    units.push_back(std::move(u));
  };
  for (Index f = 0; f < topo.feeder_count(); ++f) {
    std::vector<Index> const buses = non_root_buses(topo, f);
    bool any_pv = false;
    bool any_wind = false;
    for (Index b : buses) {
      for (Index k = 0; k < layout.loads_per_bus; ++k) { add(UnitType::Load, b); }
      if (rng.uniform() < layout.pv_probability) {
        add(UnitType::Pv, b);
        any_pv = true;
      }
      if (rng.uniform() < layout.wind_probability) {
        add(UnitType::Wind, b);
        any_wind = true;
      }
    }
    if (layout.pv_probability > 0.0 && !any_pv && !buses.empty()) { add(UnitType::Pv, buses[rng.index(buses.size())]); }
    if (layout.wind_probability > 0.0 && !any_wind && !buses.empty()) {
      add(UnitType::Wind, buses[rng.index(buses.size())]);
    }
  }
  return units;
}

void check_spec(ScenarioSpec const &spec)
{
  if (spec.horizon <= 0) { throw ConfigError("scenario: horizon must be positive"); }
  if (spec.devices < 0) { throw ConfigError("scenario: negative device count"); }
  if (!(spec.dt_hours > 0.0)) { throw ConfigError("scenario: dt must be positive"); }
  if (spec.generation_share < 0.0) { throw ConfigError("scenario: negative generation share"); }
}

} // namespace

Scenario generate_randomized(ScenarioSpec const &spec, Topology const &topology)
{
  check_spec(spec);
  Scenario s;
  s.spec = spec;
  Index const T = spec.horizon;
  Rng const root(spec.seed);
  Profiles const shapes = synthetic_profiles(T, root.stream("weather").next_u64());
  s.devices = place_devices(spec, topology, shapes.pv, 8.0);
  s.units = lay_out_units(spec, topology, {2, 0.0, 0.3});

  // Shared base series per unit type, then one exponential draw per unit and
  // step around the base value.
  Rng base_rng = root.stream("base");
  Eigen::VectorXd load_base(T);
  Eigen::VectorXd wind_base(T);
  for (Index t = 0; t < T; ++t) { load_base[t] = base_rng.uniform(); }
  for (Index t = 0; t < T; ++t) { wind_base[t] = base_rng.uniform(); }
  for (std::size_t k = 0; k < s.units.size(); ++k) {
    Unit &u = s.units[k];
    Rng rng = root.stream("series", k);
    Eigen::VectorXd const &base = u.type == UnitType::Load ? load_base : wind_base;
    double const sign = u.type == UnitType::Load ? 1.0 : -1.0;
    u.p.resize(T);
    for (Index t = 0; t < T; ++t) { u.p[t] = sign * u.rating_kw * rng.exponential(base[t]); }
  }
  calibrate(s, {{UnitType::Wind, 1.0}});
  return s;
}

Scenario generate_regular(ScenarioSpec const &spec, Topology const &topology, Profiles const &profiles)
{
  check_spec(spec);
  Index const T = spec.horizon;
  if (profiles.pv.size() < T || profiles.wind.size() < T || profiles.load.size() < T) {
    throw ConfigError("scenario: profiles shorter than the horizon");
  }
  Scenario s;
  s.spec = spec;
  s.devices = place_devices(spec, topology, profiles.pv, 12.0);
  s.units = lay_out_units(spec, topology, {2, 0.5, 0.2});
  for (Unit &u : s.units) {
    Eigen::VectorXd const &shape = u.type == UnitType::Load ? profiles.load : (u.type == UnitType::Pv ? profiles.pv : profiles.wind);
    double const sign = u.type == UnitType::Load ? 1.0 : -1.0;
    u.p = sign * u.rating_kw * shape.head(T);
  }
  calibrate(s, {{UnitType::Pv, 0.6}, {UnitType::Wind, 0.4}});
  return s;
}

Scenario generate_scenario(ScenarioSpec const &spec, Topology const &topology)
{
  if (spec.kind == ScenarioKind::Randomized) { return generate_randomized(spec, topology); }
  Profiles p = default_profiles();
  if (!spec.pv_profile.empty()) { p.pv = load_profile_csv(spec.pv_profile); }
  if (!spec.wind_profile.empty()) { p.wind = load_profile_csv(spec.wind_profile); }
  if (!spec.load_profile.empty()) { p.load = load_profile_csv(spec.load_profile); }
  return generate_regular(spec, topology, p);
}

void unit_residuals(Scenario const &scenario, Topology const &topology, Eigen::MatrixXd &p_mw, Eigen::MatrixXd &q_mvar)
{
  Index const T = scenario.spec.horizon;
  p_mw = Eigen::MatrixXd::Zero(topology.bus_count(), T);
  q_mvar = Eigen::MatrixXd::Zero(topology.bus_count(), T);
  for (auto const &u : scenario.units) {
    Index const b = topology.bus_index(u.bus);
    p_mw.row(b) += 1e-3 * u.p.head(T).transpose();
    q_mvar.row(b) += 1e-3 * u.q.head(T).transpose();
  }
}

DispatchInput dispatch_input(Scenario const &scenario, Topology const &topology)
{
  DispatchInput in;
  in.topology = &topology;
  in.dt_hours = scenario.spec.dt_hours;
  unit_residuals(scenario, topology, in.residual_p, in.residual_q);
  in.devices = scenario.devices;
  return in;
}

void unit_consumption(Scenario const &scenario, Eigen::VectorXd &p_mw, Eigen::VectorXd &q_mvar)
{
  Index const T = scenario.spec.horizon;
  p_mw = Eigen::VectorXd::Zero(T);
  q_mvar = Eigen::VectorXd::Zero(T);
  for (auto const &u : scenario.units) {
    if (u.type != UnitType::Load) { continue; }
    p_mw += 1e-3 * u.p.head(T);
    q_mvar += 1e-3 * u.q.head(T);
  }
}

namespace {

nlohmann::ordered_json spec_json(ScenarioSpec const &s)
{
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(s.kind));
  j["seed"] = s.seed;
  j["horizon"] = s.horizon;
  j["devices"] = s.devices;
  j["dt_hours"] = s.dt_hours;
  j["controllable_share"] = s.controllable_share;
  j["generation_share"] = s.generation_share;
  j["feeder_split"] = s.feeder_split;
  std::vector<std::string> kinds;
  for (DeviceKind k : s.device_kinds) { kinds.emplace_back(to_string(k)); }
  j["device_kinds"] = kinds;
  if (!s.pv_profile.empty()) { j["pv_profile"] = s.pv_profile; }
  if (!s.wind_profile.empty()) { j["wind_profile"] = s.wind_profile; }
  if (!s.load_profile.empty()) { j["load_profile"] = s.load_profile; }
  return j;
}

/// Fields absent from the document keep the defaults of the kind's preset.
ScenarioSpec spec_from(nlohmann::json const &j)
{
  ScenarioKind const kind = scenario_kind_from_string(j.value("kind", std::string("randomized")));
  std::uint64_t const seed = j.value("seed", std::uint64_t{1});
  ScenarioSpec s = kind == ScenarioKind::Randomized ? randomized_spec(seed) : regular_spec(seed);
  s.horizon = j.value("horizon", s.horizon);
  s.devices = j.value("devices", s.devices);
  s.dt_hours = j.value("dt_hours", s.dt_hours);
  s.controllable_share = j.value("controllable_share", s.controllable_share);
  s.generation_share = j.value("generation_share", s.generation_share);
  if (j.contains("feeder_split")) { s.feeder_split = j.at("feeder_split").get<std::vector<Index>>(); }
  if (j.contains("device_kinds")) {
    s.device_kinds.clear();
    for (auto const &k : j.at("device_kinds")) { s.device_kinds.push_back(device_kind_from_string(k.get<std::string>())); }
  }
  s.pv_profile = j.value("pv_profile", std::string{});
  s.wind_profile = j.value("wind_profile", std::string{});
  s.load_profile = j.value("load_profile", std::string{});
  return s;
}

} // namespace

std::string spec_to_json(ScenarioSpec const &spec) { return spec_json(spec).dump(1); }

ScenarioSpec spec_from_json(std::string const &text)
{
  try {
    return spec_from(nlohmann::json::parse(text));
  } catch (nlohmann::json::exception const &e) {
    throw ConfigError(std::string("scenario spec: ") + e.what());
  }
}

std::string scenario_to_json(Scenario const &s)
{
  using detail::params_json;
  using detail::vec_json;
  nlohmann::ordered_json j;
  j["spec"] = spec_json(s.spec);
  j["controllable_share"] = s.controllable_share;
  j["units"] = nlohmann::json::array();
  for (auto const &u : s.units) {
    nlohmann::ordered_json uj;
    uj["id"] = u.id;
    uj["bus"] = u.bus;
    uj["type"] = std::string(to_string(u.type));
    uj["rating_kw"] = u.rating_kw;
    uj["load_factor"] = u.load_factor;
    uj["p"] = vec_json(u.p);
    uj["q"] = vec_json(u.q);
    j["units"].push_back(uj);
  }
  j["devices"] = nlohmann::json::array();
  for (auto const &d : s.devices) {
    nlohmann::ordered_json dj;
    dj["id"] = d.id;
    dj["bus"] = d.bus;
    dj["params"] = params_json(d.params);
    dj["x0"] = d.x0;
    dj["exo"] = {{"tem", vec_json(d.exo.tem)}, {"sol", vec_json(d.exo.sol)}, {"wat", vec_json(d.exo.wat)},
                 {"occ", vec_json(d.exo.occ)}};
    j["devices"].push_back(dj);
  }
  return j.dump(1);
}

Scenario scenario_from_json(std::string const &text)
{
  using detail::params_from;
  using detail::vec_from;
  try {
    auto const j = nlohmann::json::parse(text);
    Scenario s;
    s.spec = spec_from(j.at("spec"));
    s.controllable_share = j.value("controllable_share", 0.0);
    for (auto const &uj : j.at("units")) {
      Unit u;
      u.id = uj.at("id").get<std::string>();
      u.bus = uj.at("bus").get<std::string>();
      u.type = unit_type_from_string(uj.at("type").get<std::string>());
      u.rating_kw = uj.at("rating_kw").get<double>();
      u.load_factor = uj.at("load_factor").get<double>();
      u.p = vec_from(uj.at("p"));
      u.q = vec_from(uj.at("q"));
      if (u.p.size() < s.spec.horizon || u.q.size() < s.spec.horizon) {
        throw ConfigError("scenario: unit " + u.id + " series shorter than the horizon");
      }
      s.units.push_back(std::move(u));
    }
    for (auto const &dj : j.at("devices")) {
      FlexDevice d;
      d.id = dj.at("id").get<std::string>();
      d.bus = dj.at("bus").get<std::string>();
      d.params = params_from(dj.at("params"));
      d.x0 = dj.at("x0").get<double>();
      auto const &e = dj.at("exo");
      d.exo.tem = vec_from(e.at("tem"));
      d.exo.sol = vec_from(e.at("sol"));
      d.exo.wat = vec_from(e.at("wat"));
      d.exo.occ = vec_from(e.at("occ"));
      d.exo.validate();
      s.devices.push_back(std::move(d));
    }
    return s;
  } catch (nlohmann::json::exception const &e) {
    throw ConfigError(std::string("scenario file: ") + e.what());
  }
}

} // namespace flexgrid
