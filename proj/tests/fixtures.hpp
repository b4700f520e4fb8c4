#pragma once

#include <string>

#include "flexgrid/algorithms.hpp"
#include "flexgrid/random.hpp"
#include "flexgrid/scheduling.hpp"

namespace flexgrid::testing {

// One unit of energy per on-step, band [0, 1], empty at the start: the device
// has to be switched on exactly once.
inline ScheduledDevice unit_device(std::string id, Index T)
{
  ScheduledDevice d;
  d.id = std::move(id);
  d.params = nominal_params(DeviceKind::StorageWaterBoiler);
  d.params.c_use = 0.0;
  d.params.c_los = 0.0;
  d.params.p_rated = 1.0;
  d.params.q_rated = 0.0;
  d.params.load_factor = 1.0;
  d.params.c_inp = 1.0;
  d.params.t_set = 1.0;
  d.params.t_db = 1.0;
  d.x0 = 0.0;
  d.exo = ExogenousSeries::constant(T, 10.0, 0.0, 0.0, 0.0);
  return d;
}

inline ScheduleProblem unit_problem(Eigen::RowVectorXd const &r, Index devices)
{
  ScheduleProblem p;
  p.horizon = r.size();
  p.power_scale = 1.0;
  p.r_act = r;
  p.r_react = Eigen::RowVectorXd::Zero(r.size());
  p.power_mode = PowerMode::Active;
  for (Index i = 0; i < devices; ++i) { p.devices.push_back(unit_device("u" + std::to_string(i), r.size())); }
  return p;
}

inline constexpr DeviceKind kAllKinds[] = {DeviceKind::NightStorageHeater, DeviceKind::StorageWaterBoiler,
                                           DeviceKind::HeatPump,           DeviceKind::Fridge,
                                           DeviceKind::Freezer,            DeviceKind::AirConditioner};

// Randomized parameters with weather and usage in the range the kind sees in practice.
inline ScheduledDevice random_device(Rng &rng, DeviceKind kind, Index T, std::uint64_t seed)
{
  ScheduledDevice d;
  d.params = randomize_params(nominal_params(kind), seed);
  d.id = std::string(to_string(kind)) + "-" + std::to_string(seed);
  ComfortBand const band = d.params.band();
  d.x0 = rng.uniform(band.t_low, band.t_up);
  d.exo = ExogenousSeries::constant(T, 0.0, 0.0, 0.0, 0.0);
  for (Index t = 0; t < T; ++t) {
    switch (kind) {
    case DeviceKind::NightStorageHeater: d.exo.tem[t] = rng.uniform(-10.0, 10.0); break;
    case DeviceKind::HeatPump: d.exo.tem[t] = rng.uniform(-5.0, 15.0); break;
    case DeviceKind::AirConditioner: d.exo.tem[t] = rng.uniform(22.0, 35.0); break;
    default: d.exo.tem[t] = rng.uniform(15.0, 25.0); break;
    }
    d.exo.sol[t] = rng.uniform(0.0, 500.0);
    d.exo.wat[t] = rng.index(4) == 0 ? rng.uniform(0.0, 30.0) : 0.0;
    d.exo.occ[t] = rng.uniform(0.0, 1.0);
  }
  return d;
}

// Residuals of the order of the devices' own power so that placement matters.
inline ScheduleProblem random_problem(Rng &rng, Index n, Index T, std::uint64_t seed)
{
  ScheduleProblem p;
  p.horizon = T;
  for (Index i = 0; i < n; ++i) {
    DeviceKind const kind = kAllKinds[rng.index(6)];
    p.devices.push_back(random_device(rng, kind, T, seed * 131 + static_cast<std::uint64_t>(i)));
  }
  double scale = 0.0;
  for (auto const &d : p.devices) { scale += d.params.p_rated * p.power_scale; }
  p.r_act.resize(1, T);
  p.r_react.resize(1, T);
  for (Index t = 0; t < T; ++t) {
    p.r_act(0, t) = rng.uniform(-1.5, 1.5) * scale;
    p.r_react(0, t) = rng.uniform(-0.5, 0.5) * scale;
  }
  return p;
}

inline Topology chain_topology()
{
  return parse_topology(R"({
    "buses": [{"id": "bus1", "feeder": "T"}, {"id": "bus2", "feeder": "T"}, {"id": "bus3", "feeder": "T"}],
    "lines": [{"id": "L12", "from": "bus1", "to": "bus2", "r": 0.4, "x": 0.3, "len_km": 0.1, "imax_a": 200},
              {"id": "L23", "from": "bus2", "to": "bus3", "r": 0.4, "x": 0.3, "len_km": 0.1, "imax_a": 200}],
    "transformers": [{"id": "T", "lv_bus": "bus1", "hv_kv": 20, "lv_kv": 0.4, "s_mva": 0.4, "uk_pct": 4, "ur_pct": 1}]
  })");
}

inline FlexDevice flex(ScheduledDevice const &d, std::string bus)
{
  return {d.id, std::move(bus), d.params, d.x0, d.exo};
}

// Three buses, three steps; five unit loads at the end bus, three at the middle one.
inline DispatchInput toy_input(Topology const &topo)
{
  DispatchInput in;
  in.topology = &topo;
  in.residual_p.resize(3, 3);
  in.residual_p << 5, -7, 3, 0, -4, 3, -8, 2, 1;
  in.residual_q = Eigen::MatrixXd::Zero(3, 3);
  for (int k = 0; k < 5; ++k) { in.devices.push_back(flex(unit_device("c" + std::to_string(k), 3), "bus3")); }
  for (int k = 0; k < 3; ++k) { in.devices.push_back(flex(unit_device("b" + std::to_string(k), 3), "bus2")); }
  return in;
}

} // namespace flexgrid::testing
