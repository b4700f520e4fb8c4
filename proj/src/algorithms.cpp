#include "flexgrid/algorithms.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "flexgrid/errors.hpp"

namespace flexgrid {

namespace {

constexpr std::pair<AlgorithmKind, std::string_view> kNames[] = {
    {AlgorithmKind::NoControl, "no_control"},         {AlgorithmKind::OptimalGrid, "optimal_grid"},
    {AlgorithmKind::HeuristicGrid, "heuristic_grid"}, {AlgorithmKind::OptimalLine, "optimal_line"},
    {AlgorithmKind::HeuristicLine, "heuristic_line"}, {AlgorithmKind::CriticalLine, "critical_line"},
};

} // namespace

std::string_view to_string(AlgorithmKind kind)
{
  for (auto const &[k, name] : kNames) {
    if (k == kind) { return name; }
  }
  return "unknown";
}

AlgorithmKind algorithm_kind_from_string(std::string_view name)
{
  for (auto const &[k, n] : kNames) {
    if (n == name) { return k; }
  }
  throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

void DispatchInput::validate() const
{
  if (topology == nullptr) { throw ConfigError("dispatch: no topology"); }
  Index const B = topology->bus_count();
  if (residual_p.rows() != B || residual_q.rows() != B || residual_q.cols() != residual_p.cols()) {
    throw ConfigError("dispatch: residuals must be buses x horizon");
  }
  if (horizon() <= 0) { throw ConfigError("dispatch: empty horizon"); }
  std::unordered_map<std::string, int> seen;
  for (auto const &d : devices) {
    if (++seen[d.id] > 1) { throw ConfigError("dispatch: duplicate device id '" + d.id + "'"); }
    topology->bus_index(d.bus);
    if (d.exo.size() < horizon()) { throw ConfigError("dispatch: exogenous series of '" + d.id + "' too short"); }
    flexgrid::validate(d.params);
  }
}

double flexibility(DeviceParams const &params)
{
  // c_inp is degrees per kW over a reference step.
  double const capacity_kwh = params.t_db / params.c_inp * kReferenceStepHours;
  return capacity_kwh * params.p_rated;
}

std::vector<Index> heuristic_order(std::vector<FlexDevice> const &devices, std::vector<Index> const &subset,
                                   std::vector<std::string> const &preferred)
{
  std::vector<Index> rest;
  std::vector<Index> order;
  for (std::string const &id : preferred) {
    for (Index i : subset) {
      if (devices[i].id == id && std::find(order.begin(), order.end(), i) == order.end()) { order.push_back(i); }
    }
  }
  for (Index i : subset) {
    if (std::find(order.begin(), order.end(), i) == order.end()) { rest.push_back(i); }
  }
  std::stable_sort(rest.begin(), rest.end(), [&](Index a, Index b) {
    double const fa = flexibility(devices[a].params);
    double const fb = flexibility(devices[b].params);
    if (fa != fb) { return fa > fb; }
    return devices[a].id < devices[b].id;
  });
  order.insert(order.end(), rest.begin(), rest.end());
  return order;
}

Eigen::MatrixXd feeder_totals(Topology const &topology, Eigen::MatrixXd const &per_bus)
{
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(topology.feeder_count(), per_bus.cols());
  for (Index b = 0; b < topology.bus_count(); ++b) { out.row(topology.feeder_of_bus(b)) += per_bus.row(b); }
  return out;
}

Eigen::MatrixXd line_totals(Topology const &topology, Eigen::MatrixXd const &per_bus)
{
  // Children before parents: reverse breadth-first order accumulates subtrees.
  Eigen::MatrixXd acc = per_bus;
  for (Index f = 0; f < topology.feeder_count(); ++f) {
    auto const &order = topology.feeder_order(f);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if (auto parent = topology.parent_line(*it)) { acc.row(topology.line_from(*parent)) += acc.row(*it); }
    }
  }
  Eigen::MatrixXd out(topology.line_count(), per_bus.cols());
  for (Index l = 0; l < topology.line_count(); ++l) { out.row(l) = acc.row(topology.line_to(l)); }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Context
{
  DispatchInput const &in;
  AlgorithmConfig const &cfg;
  Topology const &topo;
  Index T;
  std::vector<Index> bus_of;
  DispatchResult result;

  Context(DispatchInput const &input, AlgorithmConfig const &config, AlgorithmKind kind)
      : in(input), cfg(config), topo(*input.topology), T(input.horizon())
  {
    input.validate();
    for (auto const &d : in.devices) { bus_of.push_back(topo.bus_index(d.bus)); }
    result.kind = kind;
    result.controlled_p = in.residual_p;
    result.controlled_q = in.residual_q;
    result.devices.resize(in.devices.size());
    for (std::size_t i = 0; i < in.devices.size(); ++i) {
      result.devices[i].id = in.devices[i].id;
      result.devices[i].bus = in.devices[i].bus;
      result.devices[i].u = Eigen::VectorXd::Zero(T);
      result.devices[i].slacks = Eigen::VectorXd::Zero(T);
    }
  }

  Index feeder(Index i) const { return topo.feeder_of_bus(bus_of[i]); }

  std::vector<Index> devices_of_feeder(Index f) const
  {
    std::vector<Index> out;
    for (Index i = 0; i < static_cast<Index>(in.devices.size()); ++i) {
      if (feeder(i) == f) { out.push_back(i); }
    }
    return out;
  }

  double p_of(Index i) const { return in.devices[i].params.p_rated * cfg.power_scale; }
  double q_of(Index i) const { return in.devices[i].params.q_rated * cfg.power_scale; }

  ScheduleProblem problem(Eigen::MatrixXd r_p, Eigen::MatrixXd r_q) const
  {
    ScheduleProblem p;
    p.horizon = T;
    p.dt_hours = in.dt_hours;
    p.power_scale = cfg.power_scale;
    p.r_act = std::move(r_p);
    p.r_react = std::move(r_q);
    p.objective = cfg.objective;
    p.power_mode = cfg.power_mode;
    p.control = cfg.control;
    p.variable_mode = cfg.variable_mode;
    p.integer_slack = cfg.integer_slack;
    p.options = cfg.options;
    return p;
  }

  ScheduledDevice scheduled(Index i, std::vector<Index> channels = {0}) const
  {
    FlexDevice const &d = in.devices[i];
    return {d.id, d.params, d.x0, d.exo.head(T), std::move(channels)};
  }

  /// Stores row k of a solved schedule as device i's dispatch.
  void record(Index i, Schedule const &s, Index k)
  {
    DeviceDispatch &dd = result.devices[i];
    dd.u = s.u.row(k).transpose();
    dd.slacks = s.slacks.row(k).transpose();
    dd.exact = s.exact;
    dd.relaxed_fallback = s.relaxed_fallback;
    result.controlled_p.row(bus_of[i]) += p_of(i) * dd.u.transpose();
    result.controlled_q.row(bus_of[i]) += q_of(i) * dd.u.transpose();
  }

  void count(Schedule const &s)
  {
    ++result.stats.solves;
    if (s.exact) { ++result.stats.exact_solves; }
    if (s.relaxed_fallback) { ++result.stats.relaxed_fallbacks; }
    SolveStats &a = result.stats.solver;
    a.nodes += s.stats.nodes;
    a.leaves += s.stats.leaves;
    a.sweeps += s.stats.sweeps;
    a.cycles += s.stats.cycles;
    a.repair_flips += s.stats.repair_flips;
    a.polish_moves += s.stats.polish_moves;
  }

  /// Sequential single-device solves. `target` (1 x T each) is the profile
  /// the devices flatten; it absorbs every schedule before the next solve.
  void sequence(std::vector<Index> const &order, Eigen::RowVectorXd &target_p, Eigen::RowVectorXd &target_q)
  {
    for (Index i : order) {
      ScheduleProblem p = problem(target_p, target_q);
      p.devices.push_back(scheduled(i));
      Schedule const s = solve(p);
      count(s);
      record(i, s, 0);
      result.order.push_back(in.devices[i].id);
      target_p += p_of(i) * s.u.row(0);
      target_q += q_of(i) * s.u.row(0);
    }
  }

  DispatchResult finish(Clock::time_point start)
  {
    result.solve_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    if (result.kind != AlgorithmKind::NoControl) {
      for (Index i = 0; i < static_cast<Index>(in.devices.size()); ++i) {
        ScheduleProblem p = problem(Eigen::MatrixXd::Zero(1, T), Eigen::MatrixXd::Zero(1, T));
        p.devices.push_back(scheduled(i));
        Evaluation const e = evaluate(p, result.devices[i].u.transpose());
        result.devices[i].violations = e.violations;
        result.devices[i].max_violation = e.max_violation;
      }
    }
    for (auto const &d : result.devices) {
      result.violations += d.violations;
      result.max_violation = std::max(result.max_violation, d.max_violation);
    }
    return std::move(result);
  }
};

/// Joint problem of one feeder over the transformer channel and, for the
/// line variant, one channel per feeder line.
ScheduleProblem feeder_problem(Context const &c, Index f, std::vector<Index> const &members, bool lines,
                               Eigen::MatrixXd const &per_bus_p, Eigen::MatrixXd const &per_bus_q)
{
  Eigen::MatrixXd const fp = feeder_totals(c.topo, per_bus_p);
  Eigen::MatrixXd const fq = feeder_totals(c.topo, per_bus_q);
  std::vector<Index> const flines = lines ? c.topo.feeder_lines(f) : std::vector<Index>{};
  Index const C = 1 + static_cast<Index>(flines.size());
  Eigen::MatrixXd rp(C, c.T);
  Eigen::MatrixXd rq(C, c.T);
  rp.row(0) = fp.row(f);
  rq.row(0) = fq.row(f);
  std::unordered_map<Index, Index> channel_of_line;
  if (lines) {
    Eigen::MatrixXd const lp = line_totals(c.topo, per_bus_p);
    Eigen::MatrixXd const lq = line_totals(c.topo, per_bus_q);
    for (std::size_t k = 0; k < flines.size(); ++k) {
      rp.row(1 + static_cast<Index>(k)) = lp.row(flines[k]);
      rq.row(1 + static_cast<Index>(k)) = lq.row(flines[k]);
      channel_of_line[flines[k]] = 1 + static_cast<Index>(k);
    }
  }
  ScheduleProblem p = c.problem(rp, rq);
  for (Index i : members) {
    std::vector<Index> ch{0};
    if (lines) {
      for (Index l : c.topo.path_lines(c.bus_of[i])) { ch.push_back(channel_of_line.at(l)); }
    }
    p.devices.push_back(c.scheduled(i, ch));
  }
  return p;
}

DispatchResult joint(DispatchInput const &input, AlgorithmConfig const &config, AlgorithmKind kind, bool lines)
{
  auto const start = Clock::now();
  Context c(input, config, kind);
  for (Index f = 0; f < c.topo.feeder_count(); ++f) {
    std::vector<Index> const members = c.devices_of_feeder(f);
    if (members.empty()) { continue; }
    ScheduleProblem const p = feeder_problem(c, f, members, lines, input.residual_p, input.residual_q);
    Schedule const s = solve(p);
    c.count(s);
    for (std::size_t k = 0; k < members.size(); ++k) {
      c.record(members[k], s, static_cast<Index>(k));
      c.result.order.push_back(input.devices[members[k]].id);
    }
  }
  return c.finish(start);
}

void grid_sequences(Context &c, std::vector<Index> const &skip)
{
  Eigen::MatrixXd const fp = feeder_totals(c.topo, c.result.controlled_p);
  Eigen::MatrixXd const fq = feeder_totals(c.topo, c.result.controlled_q);
  for (Index f = 0; f < c.topo.feeder_count(); ++f) {
    std::vector<Index> members;
    for (Index i : c.devices_of_feeder(f)) {
      if (std::find(skip.begin(), skip.end(), i) == skip.end()) { members.push_back(i); }
    }
    if (members.empty()) { continue; }
    Eigen::RowVectorXd tp = fp.row(f);
    Eigen::RowVectorXd tq = fq.row(f);
    c.sequence(heuristic_order(c.in.devices, members, c.cfg.device_order), tp, tq);
  }
}

} // namespace

DispatchResult no_control(DispatchInput const &input, AlgorithmConfig const &config)
{
  auto const start = Clock::now();
  Context c(input, config, AlgorithmKind::NoControl);
  for (Index i = 0; i < static_cast<Index>(input.devices.size()); ++i) {
    FlexDevice const &d = input.devices[i];
    UncontrolledTrajectory const traj = simulate_uncontrolled(d.params, d.x0, d.exo.head(c.T), input.dt_hours);
    DeviceDispatch &dd = c.result.devices[i];
    dd.u = traj.v.cast<double>();
    c.result.controlled_p.row(c.bus_of[i]) += c.p_of(i) * dd.u.transpose();
    c.result.controlled_q.row(c.bus_of[i]) += c.q_of(i) * dd.u.transpose();
    ComfortBand const band = d.params.band();
    for (Index t = 1; t <= c.T; ++t) {
      double const viol = std::max({0.0, band.t_low - traj.x[t], traj.x[t] - band.t_up});
      if (viol > 1e-9) {
        ++dd.violations;
        dd.max_violation = std::max(dd.max_violation, viol);
      }
    }
    c.result.order.push_back(d.id);
  }
  return c.finish(start);
}

DispatchResult optimal_grid(DispatchInput const &input, AlgorithmConfig const &config)
{
  return joint(input, config, AlgorithmKind::OptimalGrid, false);
}

DispatchResult optimal_line(DispatchInput const &input, AlgorithmConfig const &config)
{
  return joint(input, config, AlgorithmKind::OptimalLine, true);
}

DispatchResult heuristic_grid(DispatchInput const &input, AlgorithmConfig const &config)
{
  auto const start = Clock::now();
  Context c(input, config, AlgorithmKind::HeuristicGrid);
  grid_sequences(c, {});
  return c.finish(start);
}

DispatchResult heuristic_line(DispatchInput const &input, AlgorithmConfig const &config)
{
  auto const start = Clock::now();
  Context c(input, config, AlgorithmKind::HeuristicLine);
  Topology const &topo = c.topo;
  for (Index f = 0; f < topo.feeder_count(); ++f) {
    std::vector<Index> buses = topo.feeder_buses(f);
    std::sort(buses.begin(), buses.end(), [&](Index a, Index b) {
      if (topo.depth(a) != topo.depth(b)) { return topo.depth(a) > topo.depth(b); }
      if (topo.subtree_height(a) != topo.subtree_height(b)) { return topo.subtree_height(a) > topo.subtree_height(b); }
      return topo.buses()[a].id < topo.buses()[b].id;
    });
    // Accumulated residual of each bus's subtree, filled deepest first.
    Eigen::MatrixXd acc_p = input.residual_p;
    Eigen::MatrixXd acc_q = input.residual_q;
    std::vector<Index> const members = c.devices_of_feeder(f);
    for (Index b : buses) {
      std::vector<Index> here;
      for (Index i : members) {
        if (c.bus_of[i] == b) { here.push_back(i); }
      }
      Eigen::RowVectorXd tp = acc_p.row(b);
      Eigen::RowVectorXd tq = acc_q.row(b);
      c.sequence(heuristic_order(input.devices, here, config.device_order), tp, tq);
      if (auto parent = topo.parent_line(b)) {
        Index const up = topo.line_from(*parent);
        acc_p.row(up) += tp;
        acc_q.row(up) += tq;
      }
    }
  }
  return c.finish(start);
}

DispatchResult critical_line(DispatchInput const &input, AlgorithmConfig const &config)
{
  auto const start = Clock::now();
  Context c(input, config, AlgorithmKind::CriticalLine);
  std::vector<Index> first;
  if (config.critical_line) {
    Index const line = c.topo.line_index(*config.critical_line);
    std::vector<Index> const below = downstream_buses(c.topo, line);
    for (Index i = 0; i < static_cast<Index>(input.devices.size()); ++i) {
      if (std::binary_search(below.begin(), below.end(), c.bus_of[i])) { first.push_back(i); }
    }
    Eigen::RowVectorXd tp = line_totals(c.topo, input.residual_p).row(line);
    Eigen::RowVectorXd tq = line_totals(c.topo, input.residual_q).row(line);
    c.sequence(heuristic_order(input.devices, first, config.device_order), tp, tq);
  }
  grid_sequences(c, first);
  return c.finish(start);
}

DispatchResult dispatch(AlgorithmKind kind, DispatchInput const &input, AlgorithmConfig const &config)
{
  switch (kind) {
  case AlgorithmKind::NoControl: return no_control(input, config);
  case AlgorithmKind::OptimalGrid: return optimal_grid(input, config);
  case AlgorithmKind::HeuristicGrid: return heuristic_grid(input, config);
  case AlgorithmKind::OptimalLine: return optimal_line(input, config);
  case AlgorithmKind::HeuristicLine: return heuristic_line(input, config);
  case AlgorithmKind::CriticalLine: return critical_line(input, config);
  }
  throw ConfigError("unknown algorithm");
}

namespace {

double result_objective(DispatchInput const &input, AlgorithmConfig const &config, DispatchResult const &result,
                        bool lines)
{
  Context c(input, config, result.kind);
  double total = 0.0;
  for (Index f = 0; f < c.topo.feeder_count(); ++f) {
    std::vector<Index> const members = c.devices_of_feeder(f);
    ScheduleProblem const p = feeder_problem(c, f, members, lines, input.residual_p, input.residual_q);
    Eigen::MatrixXd u(static_cast<Index>(members.size()), c.T);
    for (std::size_t k = 0; k < members.size(); ++k) { u.row(static_cast<Index>(k)) = result.devices[members[k]].u.transpose(); }
    if (members.empty()) {
      ScheduleProblem q = p;
      q.devices.clear();
      total += evaluate(q, Eigen::MatrixXd(0, c.T)).objective;
    } else {
      total += evaluate(p, u).objective;
    }
  }
  return total;
}

} // namespace

double grid_objective(DispatchInput const &input, AlgorithmConfig const &config, DispatchResult const &result)
{
  return result_objective(input, config, result, false);
}

double line_objective(DispatchInput const &input, AlgorithmConfig const &config, DispatchResult const &result)
{
  return result_objective(input, config, result, true);
}

std::string dispatch_to_json(DispatchResult const &r)
{
  auto values = [](Eigen::VectorXd const &v) {
    nlohmann::json a = nlohmann::json::array();
    for (Index t = 0; t < v.size(); ++t) {
      if (v[t] == 0.0 || v[t] == 1.0) {
        a.push_back(static_cast<int>(v[t]));
      } else {
        a.push_back(v[t]);
      }
    }
    return a;
  };
  nlohmann::ordered_json j;
  j["algorithm"] = std::string(to_string(r.kind));
  j["order"] = r.order;
  j["violations"] = r.violations;
  j["max_violation"] = r.max_violation;
  j["stats"] = {{"solves", r.stats.solves},
                {"exact_solves", r.stats.exact_solves},
                {"relaxed_fallbacks", r.stats.relaxed_fallbacks},
                {"nodes", r.stats.solver.nodes},
                {"sweeps", r.stats.solver.sweeps},
                {"cycles", r.stats.solver.cycles},
                {"repair_flips", r.stats.solver.repair_flips},
                {"polish_moves", r.stats.solver.polish_moves}};
  j["devices"] = nlohmann::json::array();
  for (auto const &d : r.devices) {
    nlohmann::ordered_json dj;
    dj["id"] = d.id;
    dj["bus"] = d.bus;
    dj["exact"] = d.exact;
    dj["relaxed_fallback"] = d.relaxed_fallback;
    dj["violations"] = d.violations;
    dj["max_violation"] = d.max_violation;
    dj["u"] = values(d.u);
    dj["slacks"] = values(d.slacks);
    j["devices"].push_back(dj);
  }
  return j.dump(1);
}

} // namespace flexgrid
