#include "flexgrid/powerflow.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "flexgrid/errors.hpp"

namespace flexgrid {

using cd = std::complex<double>;

PowerPair<double> line_losses(BranchFlow const &flows, cd e_k, cd e_m, double g, double b, double b_sh, double tolerance)
{
  double const drop2 = std::norm(e_k - e_m);
  double const u2 = std::norm(e_k) + std::norm(e_m);
  PowerPair<double> loss{g * drop2, -b_sh * u2 - b * drop2};
  double const scale = std::max(1.0, std::abs(loss.p) + std::abs(loss.q));
  if (std::abs(flows.p_km + flows.p_mk - loss.p) > tolerance * scale ||
      std::abs(flows.q_km + flows.q_mk - loss.q) > tolerance * scale) {
    std::ostringstream msg;
    msg << "line loss identity violated: flow sum (" << flows.p_km + flows.p_mk << ", " << flows.q_km + flows.q_mk
        << ") vs voltage drop (" << loss.p << ", " << loss.q << ")";
    throw NumericalConsistencyError(msg.str());
  }
  return loss;
}

BranchFlow line_branch_flow(double g, double b, double b_sh, cd e_k, cd e_m)
{
  double const u_k = std::abs(e_k);
  double const u_m = std::abs(e_m);
  double const theta_km = std::arg(e_k) - std::arg(e_m);
  auto const km = line_flow(g, b, b_sh, u_k, u_m, theta_km);
  auto const mk = line_flow(g, b, b_sh, u_m, u_k, -theta_km);
  return {km.p, km.q, mk.p, mk.q, km.p + mk.p, km.q + mk.q};
}

BranchFlow inphase_transformer_flow(double a_km, double g, double b, double u_k, double u_m, double theta_km)
{
  double const au = a_km * u_k;
  double const uu = au * u_m;
  double const theta_mk = -theta_km;
  BranchFlow f;
  f.p_km = au * au * g - uu * g * std::cos(theta_km) - uu * b * std::sin(theta_km);
  f.q_km = -au * au * b + uu * b * std::cos(theta_km) - uu * g * std::sin(theta_km);
  f.p_mk = u_m * u_m * g - uu * g * std::cos(theta_mk) - uu * b * std::sin(theta_mk);
  f.q_mk = -u_m * u_m * b + uu * b * std::cos(theta_mk) - uu * g * std::sin(theta_mk);
  f.p_loss = f.p_km + f.p_mk;
  f.q_loss = f.q_km + f.q_mk;
  return f;
}

double inphase_transformer_q_loss_plus_b(double a_km, double b, cd e_k, cd e_m)
{
  return b * std::norm(a_km * e_k - e_m);
}

BranchFlow phase_shift_transformer_flow(double a_km, double phi_km, double g, double b, double u_k, double u_m,
                                        double theta_km)
{
  double const au = a_km * u_k;
  double const uu = au * u_m;
  double const fwd = theta_km + phi_km;
  double const bwd = -theta_km - phi_km;
  BranchFlow f;
  f.p_km = au * au * g - uu * g * std::cos(fwd) - uu * b * std::sin(fwd);
  f.q_km = -au * au * b + uu * b * std::cos(fwd) - uu * g * std::sin(fwd);
  f.p_mk = u_m * u_m * g - uu * g * std::cos(bwd) - uu * b * std::sin(bwd);
  f.q_mk = -u_m * u_m * b + uu * b * std::cos(bwd) - uu * g * std::sin(bwd);
  f.p_loss = f.p_km + f.p_mk;
  f.q_loss = f.q_km + f.q_mk;
  return f;
}

double line_current_a(Topology const &topology, Index line, BranchFlow const &flow, double u_k, double u_m)
{
  bool const forward = flow.p_km >= 0.0;
  double const s = forward ? std::hypot(flow.p_km, flow.q_km) : std::hypot(flow.p_mk, flow.q_mk);
  double const u = forward ? u_k : u_m;
  double const kv = topology.buses()[topology.line_from(line)].nominal_kv;
  // |S| [VA] / (sqrt(3) * U [V])
  return s * topology.base_mva() * 1e6 / (std::numbers::sqrt3 * u * kv * 1e3);
}

namespace {

struct BranchModel
{
  cd z;
  cd y;
  double b_sh = 0.0;
};

BranchFlow transformer_branch_flow(Transformer const &tr, cd y, cd e_k, cd e_m)
{
  double const u_k = std::abs(e_k);
  double const u_m = std::abs(e_m);
  double const theta_km = std::arg(e_k) - std::arg(e_m);
  if (tr.phase_shift_rad == 0.0) { return inphase_transformer_flow(tr.tap_ratio, y.real(), y.imag(), u_k, u_m, theta_km); }
  return phase_shift_transformer_flow(tr.tap_ratio, tr.phase_shift_rad, y.real(), y.imag(), u_k, u_m, theta_km);
}

} // namespace

PowerFlowResult solve_power_flow(Topology const &topology, Eigen::VectorXcd const &load, PowerFlowOptions const &options)
{
  Index const nb = topology.bus_count();
  Index const nl = topology.line_count();
  Index const nf = topology.feeder_count();
  if (load.size() != nb) { throw ConfigError("power flow: injection vector does not match bus count"); }

  std::vector<BranchModel> lines(nl);
  for (Index l = 0; l < nl; ++l) {
    auto const z = topology.line_impedance(l);
    lines[l] = {z.z(), z.y(), topology.lines()[l].b_sh};
  }
  std::vector<BranchModel> trafos(nf);
  std::vector<cd> taps(nf);
  for (Index f = 0; f < nf; ++f) {
    auto const &tr = topology.transformers()[f];
    auto const z = transformer_impedance(tr, topology.base_mva());
    trafos[f] = {z.z(), z.y(), 0.0};
    taps[f] = std::polar(tr.tap_ratio, tr.phase_shift_rad);
  }
  cd const e_slack{1.0, 0.0};

  Eigen::VectorXcd e = Eigen::VectorXcd::Constant(nb, e_slack);
  Eigen::VectorXcd subtree(nb);  // current leaving each bus towards its subtree (incl. own load)
  Eigen::VectorXcd series(nl);   // series current of each line, from -> to
  std::vector<cd> trafo_current(nf);
  std::vector<BranchFlow> flows(nl + nf);
  double mismatch = 0.0;

  auto evaluate_flows = [&]() {
    for (Index l = 0; l < nl; ++l) {
      Index const k = topology.line_from(l);
      Index const m = topology.line_to(l);
      flows[l] = line_branch_flow(lines[l].y.real(), lines[l].y.imag(), lines[l].b_sh, e[k], e[m]);
    }
    for (Index f = 0; f < nf; ++f) {
      flows[nl + f] = transformer_branch_flow(topology.transformers()[f], trafos[f].y, e_slack, e[topology.feeder_root(f)]);
    }
    double worst = 0.0;
    for (Index bus = 0; bus < nb; ++bus) {
      BranchFlow const &in = topology.parent_line(bus) ? flows[*topology.parent_line(bus)] : flows[nl + topology.feeder_of_bus(bus)];
      cd balance = cd{-in.p_mk, -in.q_mk} - load[bus];
      for (Index l : topology.child_lines(bus)) { balance -= cd{flows[l].p_km, flows[l].q_km}; }
      worst = std::max(worst, std::abs(balance));
    }
    return worst;
  };

  int it = 0;
  for (; it < options.max_iterations; ++it) {
    // Backward: accumulate currents from the leaves to the transformers.
    for (Index f = 0; f < nf; ++f) {
      auto const &order = topology.feeder_order(f);
      for (auto bus = order.rbegin(); bus != order.rend(); ++bus) {
        cd current = std::conj(load[*bus] / e[*bus]);
        for (Index l : topology.child_lines(*bus)) {
          current += series[l] + cd{0.0, lines[l].b_sh} * e[*bus];
        }
        subtree[*bus] = current;
        if (auto parent = topology.parent_line(*bus)) {
          series[*parent] = current + cd{0.0, lines[*parent].b_sh} * e[*bus];
        }
      }
      trafo_current[f] = subtree[topology.feeder_root(f)];
    }
    // Forward: voltages from the slack down.
    double max_step = 0.0;
    for (Index f = 0; f < nf; ++f) {
      auto const &order = topology.feeder_order(f);
      Index const root = topology.feeder_root(f);
      cd const e_root = taps[f] * e_slack - trafos[f].z * trafo_current[f];
      max_step = std::max(max_step, std::abs(e_root - e[root]));
      e[root] = e_root;
      for (Index bus : order) {
        if (bus == root) { continue; }
        Index const l = *topology.parent_line(bus);
        cd const e_new = e[topology.line_from(l)] - lines[l].z * series[l];
        max_step = std::max(max_step, std::abs(e_new - e[bus]));
        e[bus] = e_new;
      }
    }
    mismatch = evaluate_flows();
    if (max_step < options.voltage_tolerance && mismatch < options.mismatch_tolerance) { break; }
  }
  if (it == options.max_iterations) {
    std::ostringstream msg;
    msg << "power flow did not converge in " << options.max_iterations << " iterations (mismatch " << mismatch << " pu)";
    throw DivergenceError(msg.str(), mismatch);
  }

  PowerFlowResult result;
  result.iterations = it + 1;
  result.max_mismatch = mismatch;
  result.u = e.cwiseAbs();
  result.theta.resize(nb);
  for (Index bus = 0; bus < nb; ++bus) { result.theta[bus] = std::arg(e[bus]); }
  result.branches = flows;
  result.loading_pct = Eigen::VectorXd::Zero(nl + nf);
  result.slack_power.resize(nf);
  for (Index l = 0; l < nl; ++l) {
    Index const k = topology.line_from(l);
    Index const m = topology.line_to(l);
    line_losses(flows[l], e[k], e[m], lines[l].y.real(), lines[l].y.imag(), lines[l].b_sh, options.identity_tolerance);
    double const i_max = topology.lines()[l].i_max_a;
    if (i_max > 0.0) { result.loading_pct[l] = line_current_a(topology, l, flows[l], result.u[k], result.u[m]) / i_max * 100.0; }
  }
  for (Index f = 0; f < nf; ++f) {
    BranchFlow const &fl = flows[nl + f];
    auto const &tr = topology.transformers()[f];
    cd const te = taps[f] * e_slack;
    cd const em = e[topology.feeder_root(f)];
    double const p_drop = trafos[f].y.real() * std::norm(te - em);
    if (std::abs(fl.p_loss - p_drop) > options.identity_tolerance * std::max(1.0, std::abs(p_drop))) {
      throw NumericalConsistencyError("transformer " + tr.id + ": loss identity violated");
    }
    double const s = fl.p_km >= 0.0 ? std::hypot(fl.p_km, fl.q_km) : std::hypot(fl.p_mk, fl.q_mk);
    result.loading_pct[nl + f] = s * topology.base_mva() / tr.s_rated_mva * 100.0;
    result.slack_power[f] = {fl.p_km, fl.q_km};
  }
  return result;
}

MetricsReport compute_metrics(GridSeries const &series, std::optional<std::string> const &critical_line)
{
  MetricsReport r;
  r.steps = static_cast<Index>(series.steps.size());
  double const dt = series.dt_hours;
  double const base = series.base_mva;
  r.total_load_mwh = series.consumption_p.cwiseAbs().sum() * dt;
  r.total_load_mvarh = series.consumption_q.cwiseAbs().sum() * dt;

  std::size_t const ne = series.element_ids.size();
  std::vector<double> peak(ne, 0.0);
  Index critical = -1;
  if (critical_line) {
    auto it = std::find(series.element_ids.begin(), series.element_ids.end(), *critical_line);
    if (it == series.element_ids.end() || series.element_is_transformer[it - series.element_ids.begin()]) {
      throw ConfigError("unknown critical line '" + *critical_line + "'");
    }
    critical = it - series.element_ids.begin();
    r.critical_line = critical_line;
  }
  double exchange_p = 0.0;
  double exchange_q = 0.0;
  for (auto const &step : series.steps) {
    for (Index i = 0; i < step.slack_power.size(); ++i) {
      exchange_p += step.slack_power[i].real();
      exchange_q += step.slack_power[i].imag();
    }
    for (auto const &br : step.branches) { r.active_losses_mw += br.p_loss * base; }
    for (Index b = 0; b < step.u.size(); ++b) {
      double const dev = std::abs(step.u[b] - 1.0) * 100.0;
      r.voltage_deviation_sum_pct += dev;
      r.voltage_deviation_max_pct = std::max(r.voltage_deviation_max_pct, dev);
      r.phase_angle_sum_deg += std::abs(step.theta[b]) * 180.0 / std::numbers::pi;
    }
    for (std::size_t i = 0; i < ne; ++i) {
      double const load = step.loading_pct[static_cast<Index>(i)];
      peak[i] = std::max(peak[i], load);
      ElementLoading &group = series.element_is_transformer[i] ? r.transformers : r.lines;
      group.max_pct = std::max(group.max_pct, load);
    }
    if (critical >= 0) {
      double const load = step.loading_pct[critical];
      r.critical.sum_pct += load;
      r.critical.max_pct = std::max(r.critical.max_pct, load);
    }
  }
  for (std::size_t i = 0; i < ne; ++i) {
    (series.element_is_transformer[i] ? r.transformers : r.lines).sum_pct += peak[i];
  }
  r.residual_load_mwh = std::abs(exchange_p) * base * dt;
  r.residual_load_mvarh = std::abs(exchange_q) * base * dt;
  return r;
}

std::string metrics_to_json(MetricsReport const &r)
{
  nlohmann::ordered_json j;
  j["steps"] = r.steps;
  j["total_load_mwh"] = r.total_load_mwh;
  j["total_load_mvarh"] = r.total_load_mvarh;
  j["residual_load_mwh"] = r.residual_load_mwh;
  j["residual_load_mvarh"] = r.residual_load_mvarh;
  j["active_grid_losses_sum_mw"] = r.active_losses_mw;
  j["voltage_deviation_sum_pct"] = r.voltage_deviation_sum_pct;
  j["voltage_deviation_max_pct"] = r.voltage_deviation_max_pct;
  j["phase_angle_shift_sum_deg"] = r.phase_angle_sum_deg;
  j["line_loading_sum_pct"] = r.lines.sum_pct;
  j["line_loading_max_pct"] = r.lines.max_pct;
  j["transformer_loading_sum_pct"] = r.transformers.sum_pct;
  j["transformer_loading_max_pct"] = r.transformers.max_pct;
  if (r.critical_line) {
    j["critical_line"] = *r.critical_line;
    j["critical_line_loading_sum_pct"] = r.critical.sum_pct;
    j["critical_line_loading_max_pct"] = r.critical.max_pct;
  }
  return j.dump(2) + "\n";
}

MetricsReport metrics_from_json(std::string const &text)
{
  try {
    auto const j = nlohmann::json::parse(text);
    MetricsReport r;
    r.steps = j.at("steps").get<Index>();
    r.total_load_mwh = j.at("total_load_mwh");
    r.total_load_mvarh = j.at("total_load_mvarh");
    r.residual_load_mwh = j.at("residual_load_mwh");
    r.residual_load_mvarh = j.at("residual_load_mvarh");
    r.active_losses_mw = j.at("active_grid_losses_sum_mw");
    r.voltage_deviation_sum_pct = j.at("voltage_deviation_sum_pct");
    r.voltage_deviation_max_pct = j.at("voltage_deviation_max_pct");
    r.phase_angle_sum_deg = j.at("phase_angle_shift_sum_deg");
    r.lines = {j.at("line_loading_sum_pct"), j.at("line_loading_max_pct")};
    r.transformers = {j.at("transformer_loading_sum_pct"), j.at("transformer_loading_max_pct")};
    if (j.contains("critical_line")) {
      r.critical_line = j.at("critical_line").get<std::string>();
      r.critical = {j.at("critical_line_loading_sum_pct"), j.at("critical_line_loading_max_pct")};
    }
    return r;
  } catch (nlohmann::json::exception const &e) {
    throw ConfigError(std::string("metrics file: ") + e.what());
  }
}

namespace {

std::string num(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(std::string const &line)
{
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) { out.push_back(cell); }
  return out;
}

std::vector<std::vector<std::string>> read_csv(std::string const &path, std::size_t columns)
{
  std::ifstream in(path);
  if (!in) { throw ConfigError("cannot open " + path); }
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) { continue; }
    auto cells = split_csv(line);
    if (cells.size() != columns) { throw ConfigError(path + ": malformed row '" + line + "'"); }
    rows.push_back(std::move(cells));
  }
  return rows;
}

} // namespace

void write_grid_series_csv(GridSeries const &series, std::string const &dir)
{
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream flows(fs::path(dir) / "flows.csv");
  flows << "t,element,kind,p_km,q_km,p_mk,q_mk,p_loss,q_loss,loading_pct\n";
  std::ofstream buses(fs::path(dir) / "buses.csv");
  buses << "t,bus,u,theta_rad\n";
  std::ofstream cons(fs::path(dir) / "consumption.csv");
  cons << "t,p_mw,q_mvar\n";
  for (std::size_t t = 0; t < series.steps.size(); ++t) {
    auto const &step = series.steps[t];
    for (std::size_t i = 0; i < series.element_ids.size(); ++i) {
      auto const &b = step.branches[i];
      flows << t << ',' << series.element_ids[i] << ',' << (series.element_is_transformer[i] ? "transformer" : "line")
            << ',' << num(b.p_km) << ',' << num(b.q_km) << ',' << num(b.p_mk) << ',' << num(b.q_mk) << ','
            << num(b.p_loss) << ',' << num(b.q_loss) << ',' << num(step.loading_pct[static_cast<Index>(i)]) << '\n';
    }
    for (std::size_t b = 0; b < series.bus_ids.size(); ++b) {
      buses << t << ',' << series.bus_ids[b] << ',' << num(step.u[static_cast<Index>(b)]) << ','
            << num(step.theta[static_cast<Index>(b)]) << '\n';
    }
    cons << t << ',' << num(series.consumption_p[static_cast<Index>(t)]) << ','
         << num(series.consumption_q[static_cast<Index>(t)]) << '\n';
  }
}

GridSeries read_grid_series_csv(std::string const &dir, double dt_hours, double base_mva)
{
  namespace fs = std::filesystem;
  GridSeries s;
  s.dt_hours = dt_hours;
  s.base_mva = base_mva;
  auto const cons = read_csv((fs::path(dir) / "consumption.csv").string(), 3);
  auto const flows = read_csv((fs::path(dir) / "flows.csv").string(), 10);
  auto const buses = read_csv((fs::path(dir) / "buses.csv").string(), 4);
  Index const T = static_cast<Index>(cons.size());
  s.consumption_p.resize(T);
  s.consumption_q.resize(T);
  for (Index t = 0; t < T; ++t) {
    s.consumption_p[t] = std::stod(cons[t][1]);
    s.consumption_q[t] = std::stod(cons[t][2]);
  }
  if (T == 0 || flows.size() % T != 0 || buses.size() % T != 0) { throw ConfigError(dir + ": inconsistent CSV row counts"); }
  std::size_t const ne = flows.size() / T;
  std::size_t const nb = buses.size() / T;
  for (std::size_t i = 0; i < ne; ++i) {
    s.element_ids.push_back(flows[i][1]);
    s.element_is_transformer.push_back(flows[i][2] == "transformer");
  }
  for (std::size_t b = 0; b < nb; ++b) { s.bus_ids.push_back(buses[b][1]); }
  s.steps.resize(T);
  for (Index t = 0; t < T; ++t) {
    auto &step = s.steps[t];
    step.branches.resize(ne);
    step.loading_pct.resize(static_cast<Index>(ne));
    std::vector<std::complex<double>> slack;
    for (std::size_t i = 0; i < ne; ++i) {
      auto const &row = flows[t * ne + i];
      if (std::stoll(row[0]) != t || row[1] != s.element_ids[i]) { throw ConfigError(dir + "/flows.csv: rows out of order"); }
      auto &b = step.branches[i];
      b = {std::stod(row[3]), std::stod(row[4]), std::stod(row[5]), std::stod(row[6]), std::stod(row[7]), std::stod(row[8])};
      step.loading_pct[static_cast<Index>(i)] = std::stod(row[9]);
      if (s.element_is_transformer[i]) { slack.emplace_back(b.p_km, b.q_km); }
    }
    step.slack_power = Eigen::Map<Eigen::VectorXcd>(slack.data(), static_cast<Index>(slack.size()));
    step.u.resize(static_cast<Index>(nb));
    step.theta.resize(static_cast<Index>(nb));
    for (std::size_t b = 0; b < nb; ++b) {
      auto const &row = buses[t * nb + b];
      if (std::stoll(row[0]) != t || row[1] != s.bus_ids[b]) { throw ConfigError(dir + "/buses.csv: rows out of order"); }
      step.u[static_cast<Index>(b)] = std::stod(row[2]);
      step.theta[static_cast<Index>(b)] = std::stod(row[3]);
    }
  }
  return s;
}

} // namespace flexgrid
