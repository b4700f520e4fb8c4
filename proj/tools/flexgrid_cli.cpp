// flexgrid command line: scenario generation, simulation runs, reports and
// side-by-side comparison of two runs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "flexgrid/errors.hpp"
#include "flexgrid/pipeline.hpp"

using namespace flexgrid;

namespace {

struct Options
{
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string algorithm;
  std::string critical_line;
  std::string out_dir;
};

RunConfig make_config(Options const &o)
{
  RunConfig c;
  try {
    if (!o.config.empty()) { c = load_run_config(o.config); }
    if (o.seed) { c.scenario.seed = *o.seed; }
    if (!o.algorithm.empty()) { c.algorithm = algorithm_kind_from_string(o.algorithm); }
    if (!o.critical_line.empty()) { c.dispatch.critical_line = o.critical_line; }
  } catch (ConfigError const &e) {
    throw StageError(Stage::Config, StageError::Category::Config, e.what());
  }
  return c;
}

std::string slurp(std::string const &path)
{
  std::ifstream f(path);
  if (!f) { throw ConfigError("cannot open '" + path + "'"); }
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int generate(Options const &o)
{
  RunConfig const c = make_config(o);
  Topology const topo = c.topology.empty() ? default_topology() : load_topology(c.topology);
  Scenario const s = generate_scenario(c.scenario, topo);
  std::filesystem::create_directories(o.out_dir);
  std::ofstream((std::filesystem::path(o.out_dir) / "scenario.json").string()) << scenario_to_json(s);
  std::printf("%s scenario, seed %llu: %zu devices, %zu units, controllable share %.3f\n",
              std::string(to_string(s.spec.kind)).c_str(), static_cast<unsigned long long>(s.spec.seed),
              s.devices.size(), s.units.size(), s.controllable_share);
  return 0;
}

int simulate(Options const &o)
{
  RunConfig const c = make_config(o);
  RunResult const r = run(c);
  write_run(r, o.out_dir);
  std::printf("%s on %s scenario (seed %llu): %.2f s, %lld comfort violations\n",
              std::string(to_string(c.algorithm)).c_str(), std::string(to_string(c.scenario.kind)).c_str(),
              static_cast<unsigned long long>(c.scenario.seed), r.dispatch.solve_seconds,
              static_cast<long long>(r.dispatch.violations));
  std::fputs(metrics_to_json(r.metrics).c_str(), stdout);
  return 0;
}

// Recomputes the metrics from the run's CSV files.
int report(Options const &o)
{
  auto const path = [&](char const *name) { return (std::filesystem::path(o.out_dir) / name).string(); };
  RunConfig const c = load_run_config(path("config.json"));
  nlohmann::json info;
  try {
    info = nlohmann::json::parse(slurp(path("run_info.json")));
  } catch (nlohmann::json::exception const &e) {
    throw ConfigError(std::string("run_info.json: ") + e.what());
  }
  GridSeries const series = read_grid_series_csv(o.out_dir, info.value("dt_hours", kReferenceStepHours),
                                                 info.value("base_mva", 0.5));
  MetricsReport const m = compute_metrics(series, c.dispatch.critical_line);
  std::fputs(compare_table(m, metrics_from_json(slurp(path("metrics.json"))), "from CSV", "metrics.json").c_str(),
             stdout);
  return 0;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Demand-response dispatch and power-flow simulation for radial low-voltage grids"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App *sub) {
    sub->add_option("--config", o.config, "run configuration JSON");
    sub->add_option("--seed", o.seed, "scenario seed (overrides the config)");
  };

  CLI::App *gen = app.add_subcommand("generate-scenario", "generate a scenario and write scenario.json");
  common(gen);
  gen->add_option("--out-dir", o.out_dir, "output directory")->required();

  CLI::App *sim = app.add_subcommand("simulate", "generate, dispatch, run power flow and write the run directory");
  common(sim);
  sim->add_option("--algorithm", o.algorithm,
                  "no_control, optimal_grid, heuristic_grid, optimal_line, heuristic_line or critical_line");
  sim->add_option("--critical-line", o.critical_line, "line id for critical_line and the critical-line metrics");
  sim->add_option("--out-dir", o.out_dir, "run directory")->required();

  CLI::App *rep = app.add_subcommand("report", "recompute a run's metrics from its CSV files");
  rep->add_option("--out-dir", o.out_dir, "run directory")->required();

  std::string run_a;
  std::string run_b;
  CLI::App *cmp = app.add_subcommand("compare", "side-by-side metrics of two runs of the same scenario");
  cmp->add_option("run_a", run_a, "first run directory")->required();
  cmp->add_option("run_b", run_b, "second run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const &e) {
    int const code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) { return generate(o); }
    if (sim->parsed()) { return simulate(o); }
    if (rep->parsed()) { return report(o); }
    if (cmp->parsed()) {
      std::fputs(compare_runs(run_a, run_b).c_str(), stdout);
      return 0;
    }
  } catch (StageError const &e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (ConfigError const &e) {
    std::cerr << "error: [config] " << e.what() << "\n";
    return 2;
  } catch (SolverError const &e) {
    std::cerr << "error: [solver] " << e.what() << "\n";
    return 3;
  } catch (DivergenceError const &e) {
    std::cerr << "error: [power-flow] " << e.what() << "\n";
    return 4;
  } catch (std::exception const &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
