#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>

#include <gtest/gtest.h>

#include "flexgrid/errors.hpp"
#include "flexgrid/powerflow.hpp"
#include "flexgrid/random.hpp"

using namespace flexgrid;
using cd = std::complex<double>;

TEST(LineFlow, FlatStartHasNoFlow)
{
  auto const f = line_flow(1.0, -5.0, 0.0, 1.0, 1.0, 0.0);
  EXPECT_EQ(f.p, 0.0);
  EXPECT_EQ(f.q, 0.0);
}

TEST(LineFlow, DirectSubstitution)
{
  auto const f = line_flow(1.0, -5.0, 0.0, 1.05, 1.0, 0.0);
  EXPECT_NEAR(f.p, 0.0525, 1e-15);
  EXPECT_NEAR(f.q, 0.2625, 1e-14);
}

TEST(LineFlow, ScalarTemplate)
{
  auto const f = line_flow<long double>(1.0L, -5.0L, 0.0L, 1.05L, 1.0L, 0.0L);
  EXPECT_NEAR(static_cast<double>(f.p), 0.0525, 1e-15);
}

TEST(LineLosses, IdentitiesAgree)
{
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    double const g = rng.uniform(0.1, 5.0);
    double const b = -rng.uniform(0.1, 5.0);
    double const bsh = i % 2 ? 0.0 : rng.uniform(0.0, 0.05);
    cd const ek = std::polar(rng.uniform(0.9, 1.1), rng.uniform(-0.2, 0.2));
    cd const em = std::polar(rng.uniform(0.9, 1.1), rng.uniform(-0.2, 0.2));
    BranchFlow const f = line_branch_flow(g, b, bsh, ek, em);
    auto const loss = line_losses(f, ek, em, g, b, bsh);
    EXPECT_NEAR(f.p_km + f.p_mk, loss.p, 1e-10);
    EXPECT_NEAR(f.q_km + f.q_mk, loss.q, 1e-10);
  }
}

TEST(LineLosses, EqualPhasors)
{
  cd const e = std::polar(1.02, 0.1);
  BranchFlow const f = line_branch_flow(2.0, -3.0, 0.01, e, e);
  auto const loss = line_losses(f, e, e, 2.0, -3.0, 0.01);
  EXPECT_NEAR(loss.p, 0.0, 1e-15);
  EXPECT_NEAR(loss.q, -2 * 0.01 * std::norm(e), 1e-15);
  BranchFlow const f0 = line_branch_flow(0.0, -3.0, 0.0, 1.0, std::polar(0.95, -0.05));
  EXPECT_NEAR(line_losses(f0, 1.0, std::polar(0.95, -0.05), 0.0, -3.0, 0.0).p, 0.0, 1e-15);
}

TEST(LineLosses, InconsistentFlowsRaise)
{
  BranchFlow f = line_branch_flow(1.0, -2.0, 0.0, 1.0, std::polar(0.97, -0.01));
  f.p_mk += 1e-6;
  EXPECT_THROW(line_losses(f, 1.0, std::polar(0.97, -0.01), 1.0, -2.0, 0.0), NumericalConsistencyError);
}

TEST(Transformer, UnityTapEqualsLine)
{
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    double const g = rng.uniform(0.1, 5.0);
    double const b = -rng.uniform(0.1, 5.0);
    double const uk = rng.uniform(0.9, 1.1);
    double const um = rng.uniform(0.9, 1.1);
    double const th = rng.uniform(-0.2, 0.2);
    BranchFlow const t = inphase_transformer_flow(1.0, g, b, uk, um, th);
    BranchFlow const l = line_branch_flow(g, b, 0.0, std::polar(uk, th), std::polar(um, 0.0));
    EXPECT_NEAR(t.p_km, l.p_km, 1e-12);
    EXPECT_NEAR(t.q_km, l.q_km, 1e-12);
    EXPECT_NEAR(t.p_mk, l.p_mk, 1e-12);
    EXPECT_NEAR(t.q_mk, l.q_mk, 1e-12);
  }
}

TEST(Transformer, OffNominalTapLoss)
{
  double const g = 2.0;
  double const b = -6.0;
  BranchFlow const f = inphase_transformer_flow(1.05, g, b, 1.0, 1.0, 0.0);
  EXPECT_NEAR(f.p_loss, g * 0.05 * 0.05, 1e-14);
  EXPECT_NEAR(f.q_loss, -b * 0.05 * 0.05, 1e-14);
}

TEST(Transformer, PlusBReactiveLossHasOppositeSignOfFlowSum)
{
  double const g = 2.0;
  double const b = -6.0;
  cd const ek = std::polar(1.01, 0.02);
  cd const em = std::polar(0.98, -0.01);
  BranchFlow const f = inphase_transformer_flow(1.02, g, b, std::abs(ek), std::abs(em), std::arg(ek) - std::arg(em));
  double const plus_b = inphase_transformer_q_loss_plus_b(1.02, b, ek, em);
  EXPECT_NEAR(f.q_loss, -plus_b, 1e-12);
  EXPECT_NEAR(f.p_loss, g * std::norm(1.02 * ek - em), 1e-12);
}

TEST(Transformer, PhaseShift)
{
  double const g = 1.5;
  double const b = -4.0;
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    double const a = rng.uniform(0.9, 1.1);
    double const uk = rng.uniform(0.9, 1.1);
    double const um = rng.uniform(0.9, 1.1);
    double const th = rng.uniform(-0.2, 0.2);
    BranchFlow const p = phase_shift_transformer_flow(a, 0.0, g, b, uk, um, th);
    BranchFlow const q = inphase_transformer_flow(a, g, b, uk, um, th);
    EXPECT_NEAR(p.p_km, q.p_km, 1e-12);
    EXPECT_NEAR(p.q_mk, q.q_mk, 1e-12);
  }
  BranchFlow const f = phase_shift_transformer_flow(1.0, 0.1, g, b, 1.0, 1.0, 0.0);
  EXPECT_NEAR(f.p_loss, g * 2.0 * (1.0 - std::cos(0.1)), 1e-14);
  BranchFlow const z = phase_shift_transformer_flow(1.0, 0.1, g, b, 1.0, 1.0, -0.1);
  EXPECT_NEAR(z.p_loss, 0.0, 1e-15);
  EXPECT_NEAR(z.q_loss, 0.0, 1e-15);
  cd const tk = std::polar(1.03, 0.07) * std::polar(0.99, 0.05);
  cd const em = std::polar(1.0, 0.01);
  BranchFlow const w = phase_shift_transformer_flow(1.03, 0.07, g, b, 0.99, 1.0, 0.04);
  EXPECT_NEAR(w.p_loss, g * std::norm(tk - em), 1e-12);
  EXPECT_NEAR(w.q_loss, -b * std::norm(tk - em), 1e-12);
}

namespace {

std::string two_bus(double r_ohm, double x_ohm)
{
  return R"({"buses": [{"id": "lv", "feeder": "T"}, {"id": "b", "feeder": "T"}],
    "lines": [{"id": "L", "from": "lv", "to": "b", "r": )" + std::to_string(r_ohm / 0.03) +
         R"(, "x": )" + std::to_string(x_ohm / 0.03) + R"(, "len_km": 0.03, "imax_a": 199}],
    "transformers": [{"id": "T", "hv_kv": 20, "lv_kv": 0.4, "s_mva": 0.5, "uk_pct": 4.1, "ur_pct": 1}],
    "base_mva": 0.5})";
}

} // namespace

TEST(Sweep, ZeroInjectionIsFlat)
{
  Topology const t = default_topology();
  PowerFlowResult const r = solve_power_flow(t, Eigen::VectorXcd::Zero(t.bus_count()));
  EXPECT_NEAR((r.u.array() - 1.0).abs().maxCoeff(), 0.0, 1e-15);
  EXPECT_NEAR(r.theta.cwiseAbs().maxCoeff(), 0.0, 1e-15);
  for (auto const &b : r.branches) { EXPECT_NEAR(b.p_loss, 0.0, 1e-15); }
  EXPECT_NEAR(r.loading_pct.maxCoeff(), 0.0, 1e-12);
}

TEST(Sweep, TwoBusMatchesHandIteration)
{
  Topology const t = parse_topology(two_bus(0.397 * 0.03, 0.279 * 0.03));
  Eigen::VectorXcd load = Eigen::VectorXcd::Zero(2);
  load[1] = cd(0.01, 0.0);
  PowerFlowResult const r = solve_power_flow(t, load);

  // Independent fixed point on the series chain slack - trafo - lv - line - b.
  double const zb = 0.4 * 0.4 / 0.5;
  cd const zl = cd(0.397 * 0.03, 0.279 * 0.03) / zb;
  double const rt = 0.01;
  cd const zt{rt, std::sqrt(0.041 * 0.041 - rt * rt)};
  cd e_lv = 1.0;
  cd e_b = 1.0;
  for (int i = 0; i < 200; ++i) {
    cd const i_b = std::conj(load[1] / e_b);
    e_lv = 1.0 - zt * i_b;
    e_b = e_lv - zl * i_b;
  }
  EXPECT_NEAR(std::abs(e_b), r.u[1], 1e-8);
  EXPECT_NEAR(std::arg(e_b), r.theta[1], 1e-8);
  EXPECT_NEAR(std::abs(e_lv), r.u[0], 1e-8);
}

TEST(Sweep, SlackBalanceAndLossIdentity)
{
  Topology const t = default_topology();
  Rng rng(4);
  Eigen::VectorXcd load(t.bus_count());
  for (Index b = 0; b < t.bus_count(); ++b) { load[b] = cd(rng.uniform(-0.04, 0.06), rng.uniform(-0.01, 0.03)); }
  PowerFlowResult const r = solve_power_flow(t, load);
  cd losses{0.0, 0.0};
  for (auto const &b : r.branches) { losses += cd(b.p_loss, b.q_loss); }
  EXPECT_NEAR(std::abs(r.slack_power.sum() - load.sum() - losses), 0.0, 1e-8);
  for (Index l = 0; l < t.line_count(); ++l) {
    auto const z = t.line_impedance(l);
    cd const ek = std::polar(r.u[t.line_from(l)], r.theta[t.line_from(l)]);
    cd const em = std::polar(r.u[t.line_to(l)], r.theta[t.line_to(l)]);
    EXPECT_NEAR(r.branches[l].p_km + r.branches[l].p_mk, z.g() * std::norm(ek - em), 1e-9);
  }
}

TEST(Sweep, SmallInjectionsFlipSignToFirstOrder)
{
  Topology const t = default_topology();
  Rng rng(6);
  Eigen::VectorXcd load(t.bus_count());
  for (Index b = 0; b < t.bus_count(); ++b) { load[b] = cd(rng.uniform(-1e-4, 1e-4), rng.uniform(-1e-4, 1e-4)); }
  PowerFlowResult const a = solve_power_flow(t, load);
  PowerFlowResult const b = solve_power_flow(t, -load);
  for (std::size_t i = 0; i < a.branches.size(); ++i) {
    EXPECT_NEAR(a.branches[i].p_km, -b.branches[i].p_km, 1e-7);
    EXPECT_NEAR(a.branches[i].q_km, -b.branches[i].q_km, 1e-7);
  }
}

TEST(Sweep, DivergenceReported)
{
  Topology const t = default_topology();
  Eigen::VectorXcd load = Eigen::VectorXcd::Constant(t.bus_count(), cd(5.0, 5.0));
  PowerFlowOptions opt;
  opt.max_iterations = 5;
  try {
    solve_power_flow(t, load, opt);
    FAIL() << "expected divergence";
  } catch (DivergenceError const &e) {
    EXPECT_GT(e.last_mismatch(), 0.0);
  }
}

TEST(Sweep, LoadingAtCurrentLimit)
{
  Topology const t = parse_topology(two_bus(0.397 * 0.03, 0.279 * 0.03));
  // Find the load whose line current equals I_max by bisection on the power.
  double lo = 0.0;
  double hi = 1.0;
  for (int i = 0; i < 80; ++i) {
    double const mid = 0.5 * (lo + hi);
    Eigen::VectorXcd load = Eigen::VectorXcd::Zero(2);
    load[1] = mid;
    PowerFlowResult const r = solve_power_flow(t, load);
    (r.loading_pct[0] < 100.0 ? lo : hi) = mid;
  }
  Eigen::VectorXcd load = Eigen::VectorXcd::Zero(2);
  load[1] = 0.5 * (lo + hi);
  PowerFlowResult const r = solve_power_flow(t, load);
  GridSeries s;
  s.bus_ids = {"lv", "b"};
  s.element_ids = {"L", "T"};
  s.element_is_transformer = {false, true};
  s.steps = {r};
  s.consumption_p = Eigen::VectorXd::Constant(1, load[1].real() * 0.5);
  s.consumption_q = Eigen::VectorXd::Zero(1);
  MetricsReport const m = compute_metrics(s);
  EXPECT_NEAR(m.lines.max_pct, 100.0, 1e-6);
  // Current from the sending-end power: S / (sqrt(3) U) at 0.4 kV.
  double const amps = std::abs(cd(r.branches[0].p_km, r.branches[0].q_km)) * 0.5e6 / (std::numbers::sqrt3 * r.u[0] * 400.0);
  EXPECT_NEAR(amps, 199.0, 1e-4);
}

TEST(Metrics, ZeroScenarioAndCsvRoundTrip)
{
  Topology const t = default_topology();
  GridSeries s;
  for (auto const &b : t.buses()) { s.bus_ids.push_back(b.id); }
  for (auto const &l : t.lines()) {
    s.element_ids.push_back(l.id);
    s.element_is_transformer.push_back(false);
  }
  for (auto const &tr : t.transformers()) {
    s.element_ids.push_back(tr.id);
    s.element_is_transformer.push_back(true);
  }
  s.steps.push_back(solve_power_flow(t, Eigen::VectorXcd::Zero(t.bus_count())));
  s.consumption_p = Eigen::VectorXd::Zero(1);
  s.consumption_q = Eigen::VectorXd::Zero(1);
  MetricsReport const zero = compute_metrics(s);
  EXPECT_EQ(zero.voltage_deviation_sum_pct, 0.0);
  EXPECT_EQ(zero.lines.sum_pct, 0.0);
  EXPECT_EQ(zero.transformers.max_pct, 0.0);

  Rng rng(9);
  s.steps.clear();
  for (int k = 0; k < 4; ++k) {
    Eigen::VectorXcd load(t.bus_count());
    for (Index b = 0; b < t.bus_count(); ++b) { load[b] = cd(rng.uniform(-0.05, 0.05), rng.uniform(0, 0.02)); }
    s.steps.push_back(solve_power_flow(t, load));
  }
  s.consumption_p = Eigen::VectorXd::Constant(4, 0.3);
  s.consumption_q = Eigen::VectorXd::Constant(4, 0.1);
  auto const dir = std::filesystem::temp_directory_path() / "flexgrid_pf_csv";
  write_grid_series_csv(s, dir.string());
  GridSeries const back = read_grid_series_csv(dir.string(), s.dt_hours, s.base_mva);
  EXPECT_EQ(metrics_to_json(compute_metrics(back, std::string("218874"))),
            metrics_to_json(compute_metrics(s, std::string("218874"))));
  MetricsReport const m = compute_metrics(s);
  EXPECT_EQ(metrics_to_json(metrics_from_json(metrics_to_json(m))), metrics_to_json(m));
  EXPECT_NEAR(m.total_load_mwh, 0.3, 1e-12);
  std::filesystem::remove_all(dir);
}

TEST(Metrics, LossesShrinkWithScaledInjections)
{
  Topology const t = default_topology();
  Rng rng(12);
  Eigen::VectorXcd load(t.bus_count());
  for (Index b = 0; b < t.bus_count(); ++b) { load[b] = cd(rng.uniform(-0.05, 0.08), rng.uniform(0, 0.02)); }
  double prev = std::numeric_limits<double>::infinity();
  for (double s : {1.0, 0.8, 0.5, 0.2}) {
    PowerFlowResult const r = solve_power_flow(t, s * load);
    double loss = 0.0;
    for (auto const &b : r.branches) { loss += b.p_loss; }
    EXPECT_LE(loss, prev);
    prev = loss;
  }
}
