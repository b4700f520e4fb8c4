#include "flexgrid/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flexgrid/errors.hpp"

namespace flexgrid {

namespace {

std::string read_file(std::string const &path)
{
  std::ifstream f(path);
  if (!f) { throw ConfigError("cannot open '" + path + "'"); }
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(std::string const &path, std::string const &text)
{
  std::ofstream f(path, std::ios::binary);
  if (!f) { throw ConfigError("cannot write '" + path + "'"); }
  f << text;
}

} // namespace

std::string run_config_to_json(RunConfig const &c)
{
  AlgorithmConfig const &a = c.dispatch;
  nlohmann::ordered_json j;
  j["topology"] = c.topology;
  j["scenario"] = nlohmann::ordered_json::parse(spec_to_json(c.scenario));
  j["algorithm"] = std::string(to_string(c.algorithm));
  nlohmann::ordered_json d;
  d["objective"] = std::string(to_string(a.objective));
  d["power_mode"] = std::string(to_string(a.power_mode));
  d["variable_mode"] = std::string(to_string(a.variable_mode));
  d["integer_slack"] = a.integer_slack;
  d["control"] = {{"kind", a.control.kind == ControlMode::Kind::FullControl ? "full_control" : "internal_controller"},
                  {"w1", a.control.w1},
                  {"w2", a.control.w2}};
  if (a.control.margin) { d["control"]["margin"] = *a.control.margin; }
  d["options"] = {{"exact_single_bits", a.options.exact_single_bits}, {"exact_joint_bits", a.options.exact_joint_bits},
                  {"tolerance", a.options.tolerance}, {"max_sweeps", a.options.max_sweeps},
                  {"max_cycles", a.options.max_cycles}, {"polish", a.options.polish}};
  d["power_scale"] = a.power_scale;
  if (a.critical_line) { d["critical_line"] = *a.critical_line; }
  d["device_order"] = a.device_order;
  j["dispatch"] = d;
  j["power_flow"] = {{"max_iterations", c.power_flow.max_iterations},
                     {"voltage_tolerance", c.power_flow.voltage_tolerance},
                     {"mismatch_tolerance", c.power_flow.mismatch_tolerance},
                     {"identity_tolerance", c.power_flow.identity_tolerance}};
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json(std::string const &text)
{
  try {
    auto const j = nlohmann::json::parse(text);
    RunConfig c;
    c.topology = j.value("topology", std::string{});
    if (j.contains("scenario")) { c.scenario = spec_from_json(j.at("scenario").dump()); }
    c.algorithm = algorithm_kind_from_string(j.value("algorithm", std::string(to_string(c.algorithm))));
    if (j.contains("dispatch")) {
      auto const &d = j.at("dispatch");
      AlgorithmConfig &a = c.dispatch;
      a.objective = objective_kind_from_string(d.value("objective", std::string(to_string(a.objective))));
      a.power_mode = power_mode_from_string(d.value("power_mode", std::string(to_string(a.power_mode))));
      a.variable_mode = variable_mode_from_string(d.value("variable_mode", std::string(to_string(a.variable_mode))));
      a.integer_slack = d.value("integer_slack", a.integer_slack);
      if (d.contains("control")) {
        auto const &k = d.at("control");
        std::string const kind = k.value("kind", std::string("full_control"));
        if (kind != "full_control" && kind != "internal_controller") { throw ConfigError("unknown control mode " + kind); }
        a.control.kind = kind == "full_control" ? ControlMode::Kind::FullControl : ControlMode::Kind::InternalController;
        a.control.w1 = k.value("w1", a.control.w1);
        a.control.w2 = k.value("w2", a.control.w2);
        if (k.contains("margin")) { a.control.margin = k.at("margin").get<double>(); }
      }
      if (d.contains("options")) {
        auto const &o = d.at("options");
        a.options.exact_single_bits = o.value("exact_single_bits", a.options.exact_single_bits);
        a.options.exact_joint_bits = o.value("exact_joint_bits", a.options.exact_joint_bits);
        a.options.tolerance = o.value("tolerance", a.options.tolerance);
        a.options.max_sweeps = o.value("max_sweeps", a.options.max_sweeps);
        a.options.max_cycles = o.value("max_cycles", a.options.max_cycles);
        a.options.polish = o.value("polish", a.options.polish);
      }
      a.power_scale = d.value("power_scale", a.power_scale);
      if (d.contains("critical_line") && !d.at("critical_line").is_null()) {
        a.critical_line = d.at("critical_line").get<std::string>();
      }
      if (d.contains("device_order")) { a.device_order = d.at("device_order").get<std::vector<std::string>>(); }
    }
    if (j.contains("power_flow")) {
      auto const &p = j.at("power_flow");
      c.power_flow.max_iterations = p.value("max_iterations", c.power_flow.max_iterations);
      c.power_flow.voltage_tolerance = p.value("voltage_tolerance", c.power_flow.voltage_tolerance);
      c.power_flow.mismatch_tolerance = p.value("mismatch_tolerance", c.power_flow.mismatch_tolerance);
      c.power_flow.identity_tolerance = p.value("identity_tolerance", c.power_flow.identity_tolerance);
    }
    if (c.power_flow.max_iterations <= 0) { throw ConfigError("power_flow.max_iterations must be positive"); }
    if (!(c.dispatch.control.w1 > 0.0)) { throw ConfigError("dispatch.control.w1 must be positive"); }
    return c;
  } catch (nlohmann::json::exception const &e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

RunConfig load_run_config(std::string const &path) { return run_config_from_json(read_file(path)); }

std::string_view to_string(Stage stage)
{
  switch (stage) {
  case Stage::Config: return "config";
  case Stage::Scenario: return "scenario";
  case Stage::Dispatch: return "dispatch";
  case Stage::PowerFlow: return "power-flow";
  case Stage::Metrics: return "metrics";
  case Stage::Output: return "output";
  }
  return "unknown";
}

int StageError::exit_code() const
{
  switch (category_) {
  case Category::Config: return 2;
  case Category::Solver: return 3;
  case Category::Divergence: return 4;
  case Category::Other: return 1;
  }
  return 1;
}

namespace {

template <class F>
auto staged(Stage stage, F &&f) -> decltype(f())
{
  try {
    return f();
  } catch (StageError const &) {
    throw;
  } catch (ConfigError const &e) {
    throw StageError(stage, StageError::Category::Config, e.what());
  } catch (SolverError const &e) {
    throw StageError(stage, StageError::Category::Solver, e.what());
  } catch (DivergenceError const &e) {
    throw StageError(stage, StageError::Category::Divergence, e.what());
  } catch (std::exception const &e) {
    throw StageError(stage, StageError::Category::Other, e.what());
  }
}

Topology run_topology(RunConfig const &c)
{
  return c.topology.empty() ? default_topology() : load_topology(c.topology);
}

} // namespace

GridSeries grid_series(Topology const &topology, Scenario const &scenario, DispatchResult const &dispatch,
                       PowerFlowOptions const &options)
{
  GridSeries s;
  s.dt_hours = scenario.spec.dt_hours;
  s.base_mva = topology.base_mva();
  for (auto const &b : topology.buses()) { s.bus_ids.push_back(b.id); }
  for (auto const &l : topology.lines()) {
    s.element_ids.push_back(l.id);
    s.element_is_transformer.push_back(false);
  }
  for (auto const &tr : topology.transformers()) {
    s.element_ids.push_back(tr.id);
    s.element_is_transformer.push_back(true);
  }
  Index const T = dispatch.controlled_p.cols();
  if (dispatch.controlled_p.rows() != topology.bus_count()) { throw ConfigError("grid series: dispatch does not match topology"); }
  double const base = topology.base_mva();
  for (Index t = 0; t < T; ++t) {
    Eigen::VectorXcd load(topology.bus_count());
    for (Index b = 0; b < topology.bus_count(); ++b) {
      load[b] = {dispatch.controlled_p(b, t) / base, dispatch.controlled_q(b, t) / base};
    }
    try {
      s.steps.push_back(solve_power_flow(topology, load, options));
    } catch (DivergenceError const &e) {
      throw DivergenceError("step " + std::to_string(t) + ": " + e.what(), e.last_mismatch());
    }
  }
  unit_consumption(scenario, s.consumption_p, s.consumption_q);
  // Device load in MW, as dispatched.
  for (std::size_t i = 0; i < scenario.devices.size(); ++i) {
    DeviceParams const &p = scenario.devices[i].params;
    s.consumption_p += 1e-3 * p.p_rated * dispatch.devices[i].u.head(T);
    s.consumption_q += 1e-3 * p.q_rated * dispatch.devices[i].u.head(T);
  }
  return s;
}

RunResult run(RunConfig const &config)
{
  Topology const topology = staged(Stage::Config, [&] { return run_topology(config); });
  Scenario scenario = staged(Stage::Scenario, [&] { return generate_scenario(config.scenario, topology); });
  return run(config, std::move(scenario));
}

RunResult run(RunConfig const &config, Scenario scenario)
{
  RunResult r;
  r.config = config;
  Topology const topology = staged(Stage::Config, [&] { return run_topology(config); });
  r.scenario = std::move(scenario);
  r.dispatch = staged(Stage::Dispatch, [&] {
    DispatchInput const in = dispatch_input(r.scenario, topology);
    return dispatch(config.algorithm, in, config.dispatch);
  });
  r.series = staged(Stage::PowerFlow, [&] { return grid_series(topology, r.scenario, r.dispatch, config.power_flow); });
  r.metrics = staged(Stage::Metrics, [&] { return compute_metrics(r.series, config.dispatch.critical_line); });
  return r;
}

void write_run(RunResult const &r, std::string const &dir)
{
  staged(Stage::Output, [&] {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) { throw ConfigError("cannot create '" + dir + "': " + ec.message()); }
    auto const path = [&](char const *name) { return (std::filesystem::path(dir) / name).string(); };
    write_file(path("config.json"), run_config_to_json(r.config));
    write_file(path("scenario.json"), scenario_to_json(r.scenario));
    write_file(path("dispatch.json"), dispatch_to_json(r.dispatch));
    write_file(path("metrics.json"), metrics_to_json(r.metrics));
    write_grid_series_csv(r.series, dir);
    nlohmann::ordered_json info;
    info["algorithm"] = std::string(to_string(r.dispatch.kind));
    info["seed"] = r.config.scenario.seed;
    info["solve_seconds"] = r.dispatch.solve_seconds;
    info["controllable_share"] = r.scenario.controllable_share;
    info["dt_hours"] = r.series.dt_hours;
    info["base_mva"] = r.series.base_mva;
    write_file(path("run_info.json"), info.dump(2) + "\n");
    return 0;
  });
}

std::string compare_table(MetricsReport const &a, MetricsReport const &b, std::string const &label_a,
                          std::string const &label_b)
{
  struct Row
  {
    char const *name;
    double va;
    double vb;
  };
  std::vector<Row> rows = {
      {"total load [MWh]", a.total_load_mwh, b.total_load_mwh},
      {"total load [MVArh]", a.total_load_mvarh, b.total_load_mvarh},
      {"residual load [MWh]", a.residual_load_mwh, b.residual_load_mwh},
      {"residual load [MVArh]", a.residual_load_mvarh, b.residual_load_mvarh},
      {"active grid losses sum [MW]", a.active_losses_mw, b.active_losses_mw},
      {"voltage deviation sum [%]", a.voltage_deviation_sum_pct, b.voltage_deviation_sum_pct},
      {"voltage deviation max [%]", a.voltage_deviation_max_pct, b.voltage_deviation_max_pct},
      {"phase angle shift sum [deg]", a.phase_angle_sum_deg, b.phase_angle_sum_deg},
      {"line loading sum [%]", a.lines.sum_pct, b.lines.sum_pct},
      {"line loading max [%]", a.lines.max_pct, b.lines.max_pct},
      {"transformer loading sum [%]", a.transformers.sum_pct, b.transformers.sum_pct},
      {"transformer loading max [%]", a.transformers.max_pct, b.transformers.max_pct},
  };
  if (a.critical_line || b.critical_line) {
    rows.push_back({"critical line loading sum [%]", a.critical.sum_pct, b.critical.sum_pct});
    rows.push_back({"critical line loading max [%]", a.critical.max_pct, b.critical.max_pct});
  }
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-32s %16s %16s %10s\n", "metric", label_a.c_str(), label_b.c_str(), "change");
  out += buf;
  for (auto const &row : rows) {
    double const delta = row.vb - row.va;
    if (row.va != 0.0) {
      std::snprintf(buf, sizeof buf, "%-32s %16.4f %16.4f %+9.2f%%\n", row.name, row.va, row.vb, 100.0 * delta / std::abs(row.va));
    } else {
      std::snprintf(buf, sizeof buf, "%-32s %16.4f %16.4f %10s\n", row.name, row.va, row.vb, delta == 0.0 ? "+0.00%" : "n/a");
    }
    out += buf;
  }
  return out;
}

std::string compare_runs(std::string const &dir_a, std::string const &dir_b)
{
  auto const path = [](std::string const &dir, char const *name) { return (std::filesystem::path(dir) / name).string(); };
  RunConfig const ca = load_run_config(path(dir_a, "config.json"));
  RunConfig const cb = load_run_config(path(dir_b, "config.json"));
  if (spec_to_json(ca.scenario) != spec_to_json(cb.scenario) || ca.topology != cb.topology) {
    throw ConfigError("compare: runs use different scenarios");
  }
  MetricsReport const a = metrics_from_json(read_file(path(dir_a, "metrics.json")));
  MetricsReport const b = metrics_from_json(read_file(path(dir_b, "metrics.json")));
  auto const seconds = [&](std::string const &dir) {
    try {
      return nlohmann::json::parse(read_file(path(dir, "run_info.json"))).value("solve_seconds", 0.0);
    } catch (nlohmann::json::exception const &e) {
      throw ConfigError(std::string("run_info.json: ") + e.what());
    }
  };
  std::string out = compare_table(a, b, std::string(to_string(ca.algorithm)), std::string(to_string(cb.algorithm)));
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-32s %16.3f %16.3f\n", "computational time [s]", seconds(dir_a), seconds(dir_b));
  return out + buf;
}

} // namespace flexgrid
