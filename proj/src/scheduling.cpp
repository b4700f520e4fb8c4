#include "flexgrid/scheduling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "flexgrid/errors.hpp"
#include "json_io.hpp"

namespace flexgrid {

std::string_view to_string(ObjectiveKind kind)
{
  switch (kind) {
  case ObjectiveKind::SumNormQuadratic: return "sum_norm";
  case ObjectiveKind::EuclideanNorm: return "euclidean_norm";
  case ObjectiveKind::MaxNorm: return "max_norm";
  case ObjectiveKind::ApproxLinearGradient: return "approx_linear_gradient";
  }
  return "?";
}

std::string_view to_string(PowerMode mode)
{
  switch (mode) {
  case PowerMode::Active: return "active";
  case PowerMode::Reactive: return "reactive";
  case PowerMode::Both: return "both";
  }
  return "?";
}

std::string_view to_string(VariableMode mode)
{
  return mode == VariableMode::Binary ? "binary" : "relaxed_rounded";
}

ObjectiveKind objective_kind_from_string(std::string_view name)
{
  for (auto k : {ObjectiveKind::SumNormQuadratic, ObjectiveKind::EuclideanNorm, ObjectiveKind::MaxNorm,
                 ObjectiveKind::ApproxLinearGradient}) {
    if (to_string(k) == name) { return k; }
  }
  throw ConfigError("unknown objective '" + std::string(name) + "'");
}

PowerMode power_mode_from_string(std::string_view name)
{
  for (auto m : {PowerMode::Active, PowerMode::Reactive, PowerMode::Both}) {
    if (to_string(m) == name) { return m; }
  }
  throw ConfigError("unknown power mode '" + std::string(name) + "'");
}

VariableMode variable_mode_from_string(std::string_view name)
{
  for (auto m : {VariableMode::Binary, VariableMode::RelaxedRounded}) {
    if (to_string(m) == name) { return m; }
  }
  throw ConfigError("unknown variable mode '" + std::string(name) + "'");
}

void ScheduleProblem::validate() const
{
  if (horizon <= 0) { throw ConfigError("schedule: horizon must be positive"); }
  if (!(dt_hours > 0.0)) { throw ConfigError("schedule: dt must be positive"); }
  if (r_act.cols() != horizon || r_react.cols() != horizon || r_act.rows() != r_react.rows() || r_act.rows() == 0) {
    throw ConfigError("schedule: residual profiles must be channels x horizon");
  }
  if (!(control.w1 > 0.0) || !(control.w2 > 0.0)) { throw ConfigError("schedule: slack weights must be positive"); }
  for (auto const &d : devices) {
    flexgrid::validate(d.params);
    if (d.exo.size() < horizon) { throw ConfigError("schedule: exogenous series of " + d.id + " shorter than horizon"); }
    d.exo.validate();
    if (d.channels.empty()) { throw ConfigError("schedule: device " + d.id + " touches no channel"); }
    for (Index c : d.channels) {
      if (c < 0 || c >= channel_count()) { throw ConfigError("schedule: device " + d.id + " references unknown channel"); }
    }
    if (!(d.params.c_los * dt_hours < 1.0)) { throw ConfigError("schedule: loss fraction per step must be below 1"); }
  }
}

double ComfortConstraints::slack(Index t, double x, bool integer) const
{
  double a = 0.0;
  if (x < lo[t]) {
    a = w_lo[t] * (lo[t] - x);
  } else if (x > hi[t]) {
    a = w_hi[t] * (x - hi[t]);
  }
  if (integer && a > 0.0) { a = std::max(0.0, std::ceil(a - 1e-9)); }
  return a;
}

ComfortConstraints feasibility_bounds(ScheduledDevice const &device, ControlMode const &control, Index horizon,
                                      double dt_hours)
{
  ComfortConstraints c;
  c.dynamics = affine_dynamics(device.params, device.exo.head(horizon), dt_hours);
  c.x0 = device.x0;
  Index const T = horizon;
  double const d = c.dynamics.decay;
  c.base.resize(T);
  c.coeff = Eigen::MatrixXd::Zero(T, T);
  double acc = device.x0;
  for (Index t = 0; t < T; ++t) {
    acc = d * acc + c.dynamics.drift[t];
    c.base[t] = acc;
    double g = c.dynamics.gain[t];
    for (Index s = t; s < T; ++s) {
      c.coeff(s, t) = g;
      g *= d;
    }
  }
  ComfortBand const band = device.params.band();
  bool const cooling = is_cooling(device.params.kind);
  double const margin = control.margin.value_or(device.params.t_db / 4.0);
  c.lo = Eigen::VectorXd::Constant(T, band.t_low);
  c.hi = Eigen::VectorXd::Constant(T, band.t_up);
  c.w_lo = Eigen::VectorXd::Constant(T, control.w1);
  c.w_hi = Eigen::VectorXd::Constant(T, control.w1);
  if (control.kind == ControlMode::Kind::InternalController) {
    if (cooling) {
      c.lo.setConstant(band.t_low + margin);
      c.w_lo.setConstant(control.w2);
    } else {
      c.hi.setConstant(band.t_up - margin);
      c.w_hi.setConstant(control.w2);
    }
  }
  if (cooling) {
    c.hi[T - 1] = std::min(c.hi[T - 1], band.mid());
  } else {
    c.lo[T - 1] = std::max(c.lo[T - 1], band.mid());
  }
  return c;
}

namespace {

constexpr std::array<int, 2> kGroups{0, 1};

using RowRef = Eigen::Ref<Eigen::RowVectorXd const, 0, Eigen::InnerStride<>>;
using RowMut = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

double norm_of(ObjectiveKind kind, std::array<Eigen::MatrixXd, 2> const &z, std::array<bool, 2> const &active)
{
  double total = 0.0;
  for (int g : kGroups) {
    if (!active[g]) { continue; }
    Eigen::MatrixXd const &m = z[g];
    switch (kind) {
    case ObjectiveKind::SumNormQuadratic: total += m.squaredNorm(); break;
    case ObjectiveKind::EuclideanNorm: total += m.norm(); break;
    case ObjectiveKind::MaxNorm: total += m.size() ? m.cwiseAbs().maxCoeff() : 0.0; break;
    case ObjectiveKind::ApproxLinearGradient: total += m.cwiseAbs().sum(); break;
    }
  }
  return total;
}

std::array<bool, 2> active_groups(PowerMode mode)
{
  return {mode != PowerMode::Reactive, mode != PowerMode::Active};
}

/// ApproxLinearGradient works on r_t - r_{t-1} with r_{-1} = r_0.
Eigen::MatrixXd objective_base(ObjectiveKind kind, Eigen::MatrixXd const &r)
{
  if (kind != ObjectiveKind::ApproxLinearGradient) { return r; }
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(r.rows(), r.cols());
  for (Index t = 1; t < r.cols(); ++t) { d.col(t) = r.col(t) - r.col(t - 1); }
  return d;
}

/// Immutable data of a problem shared by every solver path.
struct Model
{
  Index n = 0;
  Index T = 0;
  Index C = 0;
  ObjectiveKind kind = ObjectiveKind::SumNormQuadratic;
  std::array<bool, 2> active{true, true};
  std::array<Eigen::MatrixXd, 2> base;
  std::array<Eigen::VectorXd, 2> coef;
  std::vector<std::vector<Index>> channels;
  std::vector<std::vector<Index>> members;
  std::vector<ComfortConstraints> cons;
  std::vector<Eigen::VectorXd> decay_pow;
  bool integer_slack = false;
  SolverOptions options;

  explicit Model(ScheduleProblem const &p)
  {
    p.validate();
    n = static_cast<Index>(p.devices.size());
    T = p.horizon;
    C = p.channel_count();
    kind = p.objective;
    active = active_groups(p.power_mode);
    base[0] = objective_base(kind, p.r_act);
    base[1] = objective_base(kind, p.r_react);
    coef[0].resize(n);
    coef[1].resize(n);
    members.assign(C, {});
    for (Index i = 0; i < n; ++i) {
      auto const &d = p.devices[i];
      coef[0][i] = d.params.p_rated * p.power_scale;
      coef[1][i] = d.params.q_rated * p.power_scale;
      std::vector<Index> ch = d.channels;
      std::sort(ch.begin(), ch.end());
      ch.erase(std::unique(ch.begin(), ch.end()), ch.end());
      for (Index c : ch) { members[c].push_back(i); }
      channels.push_back(std::move(ch));
      cons.push_back(feasibility_bounds(d, p.control, T, p.dt_hours));
      Eigen::VectorXd pw(T + 1);
      pw[0] = 1.0;
      for (Index k = 1; k <= T; ++k) { pw[k] = pw[k - 1] * cons.back().dynamics.decay; }
      decay_pow.push_back(std::move(pw));
    }
    integer_slack = p.integer_slack;
    options = p.options;
  }

  double gain(Index i, Index t) const { return cons[i].dynamics.gain[t]; }

  void fill_z(Eigen::MatrixXd const &u, std::array<Eigen::MatrixXd, 2> &z) const
  {
    for (int g : kGroups) {
      z[g] = base[g];
      if (!active[g]) { continue; }
      for (Index c = 0; c < C; ++c) {
        for (Index i : members[c]) { z[g].row(c) += coef[g][i] * u.row(i); }
      }
    }
  }

  /// States x_0..x_T of device i by the step recursion.
  void states(Index i, RowRef u, RowMut x) const
  {
    auto const &dyn = cons[i].dynamics;
    x[0] = cons[i].x0;
    for (Index t = 0; t < T; ++t) { x[t + 1] = dyn.decay * x[t] + dyn.drift[t] + dyn.gain[t] * u[t]; }
  }

  double device_slack(Index i, RowRef x, bool integer) const
  {
    double s = 0.0;
    for (Index t = 0; t < T; ++t) { s += cons[i].slack(t, x[t + 1], integer); }
    return s;
  }

  /// The objective every exact path compares; deterministic in u.
  double objective(Eigen::MatrixXd const &u, std::array<Eigen::MatrixXd, 2> &z, Eigen::RowVectorXd &x) const
  {
    fill_z(u, z);
    double v = norm_of(kind, z, active);
    for (Index i = 0; i < n; ++i) {
      states(i, u.row(i), x);
      v += device_slack(i, x, integer_slack);
    }
    return v;
  }

  double objective(Eigen::MatrixXd const &u) const
  {
    std::array<Eigen::MatrixXd, 2> z;
    Eigen::RowVectorXd x(T + 1);
    return objective(u, z, x);
  }
};

bool lex_less(Eigen::MatrixXd const &a, Eigen::MatrixXd const &b)
{
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index t = 0; t < a.cols(); ++t) {
      if (a(i, t) != b(i, t)) { return a(i, t) < b(i, t); }
    }
  }
  return false;
}

double accept_margin(double best) { return 1e-9 * std::max(1.0, std::abs(best)); }

Schedule make_schedule(ScheduleProblem const &problem, Eigen::MatrixXd const &u)
{
  Evaluation const e = evaluate(problem, u);
  Schedule s;
  s.u = u;
  s.slacks = e.slacks;
  s.objective = e.objective;
  s.max_violation = e.max_violation;
  s.violations = e.violations;
  return s;
}

/// Mutable state for descent and local search: switches, aggregated
/// channel profiles z and device states, updated incrementally.
class Workspace
{
public:
  Workspace(Model const &model, Eigen::MatrixXd const &u) : m_(model), u_(u)
  {
    x_.resize(m_.n, m_.T + 1);
    refresh();
  }

  Eigen::MatrixXd const &u() const { return u_; }

  void refresh()
  {
    m_.fill_z(u_, z_);
    for (Index i = 0; i < m_.n; ++i) { m_.states(i, u_.row(i), x_.row(i)); }
  }

  void refresh_device(Index i) { m_.states(i, u_.row(i), x_.row(i)); }

  /// State after step t - 1 (x_0 is the initial state).
  double state(Index i, Index t) const { return x_(i, t); }

  double penalty(Index i) const { return m_.device_slack(i, x_.row(i), false); }

  double phi() const
  {
    double v = norm_of(m_.kind, z_, m_.active);
    for (Index i = 0; i < m_.n; ++i) { v += penalty(i); }
    return v;
  }

  double slack_at(Index i, Index t, double x) const { return m_.cons[i].slack(t, x, false); }

  /// Change of the penalty of device i when u(i, t) moves by delta.
  double penalty_delta(Index i, Index t, double delta) const
  {
    double const g = m_.gain(i, t);
    if (g == 0.0 || delta == 0.0) { return 0.0; }
    auto const &pw = m_.decay_pow[i];
    double d = 0.0;
    for (Index s = t; s < m_.T; ++s) {
      double const x = x_(i, s + 1);
      d += slack_at(i, s, x + g * pw[s - t] * delta) - slack_at(i, s, x);
    }
    return d;
  }

  double penalty_delta_swap(Index i, Index t_off, Index t_on) const
  {
    double const g_off = m_.gain(i, t_off);
    double const g_on = m_.gain(i, t_on);
    auto const &pw = m_.decay_pow[i];
    double d = 0.0;
    for (Index s = std::min(t_off, t_on); s < m_.T; ++s) {
      double dx = 0.0;
      if (s >= t_off) { dx -= g_off * pw[s - t_off]; }
      if (s >= t_on) { dx += g_on * pw[s - t_on]; }
      double const x = x_(i, s + 1);
      d += slack_at(i, s, x + dx) - slack_at(i, s, x);
    }
    return d;
  }

  /// Change of the norm part when u(i, t_k) moves by delta_k for each move.
  double norm_delta(Index i, std::initializer_list<std::pair<Index, double>> moves)
  {
    double d = 0.0;
    switch (m_.kind) {
    case ObjectiveKind::SumNormQuadratic:
    case ObjectiveKind::ApproxLinearGradient:
      for (int g : kGroups) {
        if (!m_.active[g]) { continue; }
        double const a = m_.coef[g][i];
        for (Index c : m_.channels[i]) {
          for (auto const &[t, delta] : moves) {
            double const z = z_[g](c, t);
            double const zn = z + a * delta;
            d += m_.kind == ObjectiveKind::SumNormQuadratic ? zn * zn - z * z : std::abs(zn) - std::abs(z);
          }
        }
      }
      return d;
    case ObjectiveKind::EuclideanNorm:
      for (int g : kGroups) {
        if (!m_.active[g]) { continue; }
        double const a = m_.coef[g][i];
        double const ss = z_[g].squaredNorm();
        double dss = 0.0;
        for (Index c : m_.channels[i]) {
          for (auto const &[t, delta] : moves) {
            double const z = z_[g](c, t);
            dss += (z + a * delta) * (z + a * delta) - z * z;
          }
        }
        d += std::sqrt(std::max(0.0, ss + dss)) - std::sqrt(ss);
      }
      return d;
    case ObjectiveKind::MaxNorm: {
      double const before = norm_of(m_.kind, z_, m_.active);
      apply_z(i, moves, 1.0);
      double const after = norm_of(m_.kind, z_, m_.active);
      apply_z(i, moves, -1.0);
      return after - before;
    }
    }
    return d;
  }

  void move(Index i, Index t, double delta)
  {
    if (delta == 0.0) { return; }
    u_(i, t) += delta;
    apply_z(i, {{t, delta}}, 1.0);
    double const g = m_.gain(i, t);
    auto const &pw = m_.decay_pow[i];
    for (Index s = t; s < m_.T; ++s) { x_(i, s + 1) += g * pw[s - t] * delta; }
  }

  void set(Index i, Index t, double value) { move(i, t, value - u_(i, t)); }

  /// Exact minimizer of the penalized objective along coordinate (i, t).
  double best_step(Index i, Index t)
  {
    double const u0 = u_(i, t);
    double const lo = -u0;
    double const hi = 1.0 - u0;
    double const g = m_.gain(i, t);
    auto const &pw = m_.decay_pow[i];
    auto pen = [&](double delta) {
      if (g == 0.0) { return 0.0; }
      double s = 0.0;
      for (Index k = t; k < m_.T; ++k) { s += slack_at(i, k, x_(i, k + 1) + g * pw[k - t] * delta); }
      return s;
    };
    if (m_.kind == ObjectiveKind::SumNormQuadratic) {
      double A = 0.0;
      double B = 0.0;
      for (int gr : kGroups) {
        if (!m_.active[gr]) { continue; }
        double const a = m_.coef[gr][i];
        for (Index c : m_.channels[i]) {
          A += a * a;
          B += 2.0 * a * z_[gr](c, t);
        }
      }
      std::vector<double> pts{lo, hi};
      if (g != 0.0) {
        auto const &cn = m_.cons[i];
        for (Index k = t; k < m_.T; ++k) {
          double const gk = g * pw[k - t];
          for (double bound : {cn.lo[k], cn.hi[k]}) {
            double const b = (bound - x_(i, k + 1)) / gk;
            if (b > lo && b < hi) { pts.push_back(b); }
          }
        }
      }
      std::sort(pts.begin(), pts.end());
      auto f = [&](double delta) { return A * delta * delta + B * delta + pen(delta); };
      double best_delta = 0.0;
      double best = f(0.0);
      for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        double const a = pts[k];
        double const b = pts[k + 1];
        if (!(b > a)) { continue; }
        double const mid = 0.5 * (a + b);
        double slope = 0.0;
        if (g != 0.0) {
          auto const &cn = m_.cons[i];
          for (Index s = t; s < m_.T; ++s) {
            double const gk = g * pw[s - t];
            double const x = x_(i, s + 1) + gk * mid;
            if (x < cn.lo[s]) {
              slope -= cn.w_lo[s] * gk;
            } else if (x > cn.hi[s]) {
              slope += cn.w_hi[s] * gk;
            }
          }
        }
        double cand;
        if (A > 0.0) {
          cand = std::clamp(-(B + slope) / (2.0 * A), a, b);
        } else {
          cand = (B + slope) > 0.0 ? a : b;
        }
        double const v = f(cand);
        if (v < best) {
          best = v;
          best_delta = cand;
        }
      }
      return best_delta;
    }
    // Convex but non-smooth: golden-section search plus the end points.
    auto f = [&](double delta) { return norm_delta(i, {{t, delta}}) + pen(delta); };
    double const invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo;
    double b = hi;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = f(c);
    double fd = f(d);
    for (int it = 0; it < 80 && b - a > 1e-13; ++it) {
      if (fc <= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - invphi * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + invphi * (b - a);
        fd = f(d);
      }
    }
    double best_delta = 0.0;
    double best = f(0.0);
    for (double cand : {lo, hi, 0.5 * (a + b)}) {
      double const v = f(cand);
      if (v < best) {
        best = v;
        best_delta = cand;
      }
    }
    return best_delta;
  }

private:
  void apply_z(Index i, std::initializer_list<std::pair<Index, double>> moves, double sign)
  {
    for (int g : kGroups) {
      if (!m_.active[g]) { continue; }
      double const a = m_.coef[g][i];
      for (Index c : m_.channels[i]) {
        for (auto const &[t, delta] : moves) { z_[g](c, t) += sign * a * delta; }
      }
    }
  }

  Model const &m_;
  Eigen::MatrixXd u_;
  std::array<Eigen::MatrixXd, 2> z_;
  Eigen::MatrixXd x_;
};

/// Coordinate descent on one device with the others held fixed.
int descend_device(Workspace &ws, Model const &m, Index i)
{
  ws.refresh_device(i);
  double const tol = m.options.tolerance;
  for (int sweep = 1; sweep <= m.options.max_sweeps; ++sweep) {
    double const before = ws.phi();
    double max_step = 0.0;
    for (Index t = 0; t < m.T; ++t) {
      double const delta = ws.best_step(i, t);
      if (delta != 0.0) {
        ws.move(i, t, delta);
        max_step = std::max(max_step, std::abs(delta));
      }
    }
    double const after = ws.phi();
    if (before - after <= tol * std::max(1.0, std::abs(after)) || max_step < tol) { return sweep; }
  }
  throw SolverError("coordinate descent did not converge within " + std::to_string(m.options.max_sweeps) + " sweeps");
}

void repair_device(Workspace &ws, Model const &m, Index i, SolveStats *stats)
{
  Index const limit = m.T * m.T;
  Index flips = 0;
  // Among flips that reduce the penalty, the one with the best total change.
  while (ws.penalty(i) > 0.0) {
    double best = 0.0;
    Index best_t = -1;
    for (Index t = 0; t < m.T; ++t) {
      double const delta = 1.0 - 2.0 * ws.u()(i, t);
      double const dp = ws.penalty_delta(i, t, delta);
      if (dp >= 0.0) { continue; }
      double const d = dp + ws.norm_delta(i, {{t, delta}});
      if (best_t < 0 || d < best) {
        best = d;
        best_t = t;
      }
    }
    if (best_t < 0) { break; }
    ws.move(i, best_t, 1.0 - 2.0 * ws.u()(i, best_t));
    if (++flips > limit) { throw SolverError("rounding repair exceeded T^2 flips"); }
  }
  // Single flips can stall when every flip trades one violation for a
  // later one. Walk forward instead, flipping the step that leads into each
  // violated state when that flip brings the state back toward the band.
  if (ws.penalty(i) > 0.0) {
    auto const &c = m.cons[i];
    for (Index t = 0; t < m.T; ++t) {
      double const x = ws.state(i, t + 1);
      double const g = m.gain(i, t);
      double const delta = 1.0 - 2.0 * ws.u()(i, t);
      bool const low = x < c.lo[t] && g * delta > 0.0;
      bool const high = x > c.hi[t] && g * delta < 0.0;
      if (low || high) {
        ws.move(i, t, delta);
        ++flips;
      }
    }
  }
  if (stats) { stats->repair_flips += static_cast<int>(flips); }
}

int polish_device(Workspace &ws, Model const &m, Index i)
{
  int moves = 0;
  for (int pass = 0; pass < 4 * static_cast<int>(m.T) + 8; ++pass) {
    bool improved = false;
    double const eps = 1e-12 * std::max(1.0, std::abs(ws.phi()));
    for (Index t = 0; t < m.T; ++t) {
      double const delta = 1.0 - 2.0 * ws.u()(i, t);
      double const d = ws.norm_delta(i, {{t, delta}}) + ws.penalty_delta(i, t, delta);
      if (d < -eps) {
        ws.move(i, t, delta);
        ++moves;
        improved = true;
      }
    }
    for (Index t_off = 0; t_off < m.T; ++t_off) {
      if (ws.u()(i, t_off) != 1.0) { continue; }
      double const pen = ws.penalty(i);
      for (Index t_on = 0; t_on < m.T; ++t_on) {
        if (ws.u()(i, t_on) != 0.0) { continue; }
        double const dn = ws.norm_delta(i, {{t_off, -1.0}, {t_on, 1.0}});
        if (dn >= -eps && pen <= 0.0) { continue; }
        double const d = dn + ws.penalty_delta_swap(i, t_off, t_on);
        if (d < -eps) {
          ws.move(i, t_off, -1.0);
          ws.move(i, t_on, 1.0);
          ++moves;
          improved = true;
          break;
        }
      }
    }
    if (!improved) { break; }
  }
  return moves;
}

} // namespace

double objective_value(ObjectiveKind kind, PowerMode mode, Eigen::VectorXd const &r_act, Eigen::VectorXd const &r_react,
                       Eigen::VectorXd const &p, Eigen::VectorXd const &q, Eigen::MatrixXd const &u, double slack_sum)
{
  if (u.rows() != p.size() || u.rows() != q.size() || u.cols() != r_act.size() || r_act.size() != r_react.size()) {
    throw ConfigError("objective: shape mismatch");
  }
  std::array<Eigen::MatrixXd, 2> z{objective_base(kind, r_act.transpose()), objective_base(kind, r_react.transpose())};
  for (Index i = 0; i < u.rows(); ++i) {
    z[0].row(0) += p[i] * u.row(i);
    z[1].row(0) += q[i] * u.row(i);
  }
  return norm_of(kind, z, active_groups(mode)) + slack_sum;
}

Evaluation evaluate(ScheduleProblem const &problem, Eigen::MatrixXd const &u)
{
  Model const m(problem);
  if (u.rows() != m.n || u.cols() != m.T) { throw ConfigError("evaluate: schedule shape mismatch"); }
  Evaluation e;
  std::array<Eigen::MatrixXd, 2> z;
  Eigen::RowVectorXd x(m.T + 1);
  e.objective = m.objective(u, z, x);
  e.norm = norm_of(m.kind, z, m.active);
  e.slacks = Eigen::MatrixXd::Zero(m.n, m.T);
  e.states.resize(m.n, m.T + 1);
  for (Index i = 0; i < m.n; ++i) {
    m.states(i, u.row(i), e.states.row(i));
    auto const &c = m.cons[i];
    for (Index t = 0; t < m.T; ++t) {
      double const xv = e.states(i, t + 1);
      e.slacks(i, t) = c.slack(t, xv, m.integer_slack);
      double const viol = std::max({0.0, c.lo[t] - xv, xv - c.hi[t]});
      if (viol > 1e-9) {
        ++e.violations;
        e.max_violation = std::max(e.max_violation, viol);
      }
    }
  }
  e.slack_sum = e.slacks.sum();
  return e;
}

Schedule brute_force_oracle(ScheduleProblem const &problem, Index max_bits)
{
  Model const m(problem);
  Index const bits = m.n * m.T;
  if (bits > max_bits || bits > 62) { throw SolverError("brute force: " + std::to_string(bits) + " bits exceed budget"); }
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(m.n, m.T);
  Eigen::MatrixXd best_u = u;
  double best = std::numeric_limits<double>::infinity();
  std::array<Eigen::MatrixXd, 2> z;
  Eigen::RowVectorXd x(m.T + 1);
  std::uint64_t const count = std::uint64_t{1} << bits;
  // The first flattened element is the most significant bit, so masks run
  // in lexicographic order and the first minimum is the canonical one.
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    for (Index e = 0; e < bits; ++e) { u(e / m.T, e % m.T) = static_cast<double>((mask >> (bits - 1 - e)) & 1U); }
    double const v = m.objective(u, z, x);
    if (v < best) {
      best = v;
      best_u = u;
    }
  }
  Schedule s = make_schedule(problem, best_u);
  s.exact = true;
  s.stats.leaves = count;
  return s;
}

namespace {

class BranchAndBound
{
public:
  BranchAndBound(Model const &m, Eigen::MatrixXd const *incumbent) : m_(m)
  {
    u_ = Eigen::MatrixXd::Zero(m.n, m.T);
    x_.resize(m.T + 1);
    if (incumbent) {
      best_u_ = *incumbent;
      best_ = m_.objective(best_u_, z_, x_);
    } else {
      best_u_ = u_;
      best_ = std::numeric_limits<double>::infinity();
    }
  }

  void run() { dfs(0); }

  Eigen::MatrixXd const &best_u() const { return best_u_; }
  std::uint64_t nodes() const { return nodes_; }
  std::uint64_t leaves() const { return leaves_; }

private:
  // Variables are fixed time-major: k = t * n + i.
  void dfs(Index k)
  {
    ++nodes_;
    Index const N = m_.n * m_.T;
    if (k == N) {
      ++leaves_;
      double const v = m_.objective(u_, z_, x_);
      if (v < best_ || (v == best_ && lex_less(u_, best_u_))) {
        best_ = v;
        best_u_ = u_;
      }
      return;
    }
    if (k > 0 && std::isfinite(best_) && lower_bound(k) > best_ + accept_margin(best_)) { return; }
    Index const t = k / m_.n;
    Index const i = k % m_.n;
    for (double val : {0.0, 1.0}) {
      u_(i, t) = val;
      dfs(k + 1);
    }
    u_(i, t) = 0.0;
  }

  bool fixed(Index i, Index t, Index k) const { return t * m_.n + i < k; }

  double lower_bound(Index k) const
  {
    std::array<double, 2> acc{0.0, 0.0};
    std::vector<double> free;
    for (int g : kGroups) {
      if (!m_.active[g]) { continue; }
      for (Index c = 0; c < m_.C; ++c) {
        for (Index t = 0; t < m_.T; ++t) {
          double f = m_.base[g](c, t);
          free.clear();
          for (Index i : m_.members[c]) {
            if (fixed(i, t, k)) {
              f += m_.coef[g][i] * u_(i, t);
            } else if (m_.coef[g][i] != 0.0) {
              free.push_back(m_.coef[g][i]);
            }
          }
          double mn;
          if (free.empty()) {
            mn = std::abs(f);
          } else if (free.size() <= 3) {
            mn = std::abs(f);
            std::size_t const combos = std::size_t{1} << free.size();
            for (std::size_t s = 1; s < combos; ++s) {
              double v = f;
              for (std::size_t b = 0; b < free.size(); ++b) {
                if (s & (std::size_t{1} << b)) { v += free[b]; }
              }
              mn = std::min(mn, std::abs(v));
            }
          } else {
            double lo = f;
            double hi = f;
            for (double a : free) {
              lo += std::min(0.0, a);
              hi += std::max(0.0, a);
            }
            mn = (lo <= 0.0 && hi >= 0.0) ? 0.0 : std::min(std::abs(lo), std::abs(hi));
          }
          switch (m_.kind) {
          case ObjectiveKind::SumNormQuadratic:
          case ObjectiveKind::EuclideanNorm: acc[g] += mn * mn; break;
          case ObjectiveKind::MaxNorm: acc[g] = std::max(acc[g], mn); break;
          case ObjectiveKind::ApproxLinearGradient: acc[g] += mn; break;
          }
        }
      }
    }
    double lb = 0.0;
    for (int g : kGroups) { lb += m_.kind == ObjectiveKind::EuclideanNorm ? std::sqrt(acc[g]) : acc[g]; }
    for (Index i = 0; i < m_.n; ++i) {
      auto const &c = m_.cons[i];
      auto const &dyn = c.dynamics;
      double xlo = c.x0;
      double xhi = c.x0;
      for (Index t = 0; t < m_.T; ++t) {
        double const g = dyn.gain[t];
        if (fixed(i, t, k)) {
          xlo = dyn.decay * xlo + dyn.drift[t] + g * u_(i, t);
          xhi = dyn.decay * xhi + dyn.drift[t] + g * u_(i, t);
        } else {
          xlo = dyn.decay * xlo + dyn.drift[t] + std::min(0.0, g);
          xhi = dyn.decay * xhi + dyn.drift[t] + std::max(0.0, g);
        }
        if (xhi < c.lo[t]) {
          lb += c.slack(t, xhi, m_.integer_slack);
        } else if (xlo > c.hi[t]) {
          lb += c.slack(t, xlo, m_.integer_slack);
        }
      }
    }
    return lb;
  }

  Model const &m_;
  Eigen::MatrixXd u_;
  Eigen::MatrixXd best_u_;
  double best_ = 0.0;
  std::uint64_t nodes_ = 0;
  std::uint64_t leaves_ = 0;
  mutable std::array<Eigen::MatrixXd, 2> z_;
  mutable Eigen::RowVectorXd x_;
};

/// Rounds one device at a time; the devices still fractional are re-solved
/// against the residual that now includes the rounded ones.
Eigen::MatrixXd sequential_rounding(ScheduleProblem const &problem, Eigen::MatrixXd const &fractional,
                                    SolveStats *stats)
{
  Model const m(problem);
  Workspace ws(m, fractional);
  double const tol = m.options.tolerance;
  for (Index i = 0; i < m.n; ++i) {
    for (Index t = 0; t < m.T; ++t) { ws.set(i, t, ws.u()(i, t) >= 0.5 ? 1.0 : 0.0); }
    ws.refresh();
    repair_device(ws, m, i, stats);
    for (int cycle = 1; i + 1 < m.n; ++cycle) {
      double const before = ws.phi();
      for (Index j = i + 1; j < m.n; ++j) {
        int const sw = descend_device(ws, m, j);
        if (stats) { stats->sweeps += sw; }
      }
      ws.refresh();
      if (stats) { ++stats->cycles; }
      if (before - ws.phi() < tol * std::max(1.0, std::abs(ws.phi()))) { break; }
      if (cycle >= m.options.max_cycles) {
        throw SolverError("block coordinate descent did not converge within " + std::to_string(cycle) + " cycles");
      }
    }
  }
  return ws.u();
}

Eigen::MatrixXd relaxed_binary(ScheduleProblem const &problem, SolveStats *stats)
{
  Eigen::MatrixXd const frac = relaxed_solve(problem, stats);
  Eigen::MatrixXd bin =
      problem.devices.size() > 1 ? sequential_rounding(problem, frac, stats) : round_and_repair(problem, frac, stats);
  if (problem.options.polish) { bin = polish(problem, bin, stats); }
  return bin;
}

} // namespace

Schedule branch_and_bound(ScheduleProblem const &problem)
{
  Model const m(problem);
  std::optional<Eigen::MatrixXd> seed;
  SolveStats stats;
  try {
    seed = relaxed_binary(problem, &stats);
  } catch (SolverError const &) {
    seed.reset();
  }
  BranchAndBound bnb(m, seed ? &*seed : nullptr);
  bnb.run();
  Schedule s = make_schedule(problem, bnb.best_u());
  s.exact = true;
  s.stats = stats;
  s.stats.nodes = bnb.nodes();
  s.stats.leaves = bnb.leaves();
  return s;
}

Eigen::MatrixXd relaxed_solve(ScheduleProblem const &problem, SolveStats *stats)
{
  Model const m(problem);
  if (m.n == 0) { return Eigen::MatrixXd::Zero(0, m.T); }
  // Descent from all-off stalls where the comfort penalty kinks; starting
  // from the repaired all-off schedule keeps it out of those corners.
  Workspace ws(m, round_and_repair(problem, Eigen::MatrixXd::Zero(m.n, m.T)));
  double const tol = m.options.tolerance;
  int sweeps = 0;
  int cycles = 0;
  for (;;) {
    double const before = ws.phi();
    for (Index i = 0; i < m.n; ++i) { sweeps += descend_device(ws, m, i); }
    ++cycles;
    ws.refresh();
    double const after = ws.phi();
    if (m.n == 1 || before - after < tol * std::max(1.0, std::abs(after))) { break; }
    if (cycles >= m.options.max_cycles) {
      throw SolverError("block coordinate descent did not converge within " + std::to_string(cycles) + " cycles");
    }
  }
  if (stats) {
    stats->sweeps += sweeps;
    stats->cycles += cycles;
  }
  return ws.u();
}

Eigen::MatrixXd round_and_repair(ScheduleProblem const &problem, Eigen::MatrixXd const &fractional, SolveStats *stats)
{
  Model const m(problem);
  if (fractional.rows() != m.n || fractional.cols() != m.T) { throw ConfigError("round: schedule shape mismatch"); }
  Eigen::MatrixXd const rounded = (fractional.array() >= 0.5).cast<double>();
  Workspace ws(m, rounded);
  for (Index i = 0; i < m.n; ++i) { repair_device(ws, m, i, stats); }
  return ws.u();
}

Eigen::MatrixXd polish(ScheduleProblem const &problem, Eigen::MatrixXd const &binary, SolveStats *stats)
{
  Model const m(problem);
  Workspace ws(m, binary);
  int total = 0;
  for (int pass = 0; pass < 100; ++pass) {
    int moves = 0;
    for (Index i = 0; i < m.n; ++i) { moves += polish_device(ws, m, i); }
    total += moves;
    ws.refresh();
    if (moves == 0 || m.n == 1) { break; }
  }
  if (stats) { stats->polish_moves += total; }
  return ws.u();
}

Schedule solve(ScheduleProblem const &problem)
{
  problem.validate();
  Index const n = static_cast<Index>(problem.devices.size());
  if (n == 0) { return make_schedule(problem, Eigen::MatrixXd::Zero(0, problem.horizon)); }
  bool const binary = problem.variable_mode == VariableMode::Binary;
  bool const within = n == 1 ? problem.horizon <= problem.options.exact_single_bits
                             : n * problem.horizon <= problem.options.exact_joint_bits;
  if (binary && within) { return branch_and_bound(problem); }
  SolveStats stats;
  Schedule s = make_schedule(problem, relaxed_binary(problem, &stats));
  s.stats = stats;
  s.relaxed_fallback = binary;
  return s;
}

Schedule solve_single_device(ScheduleProblem const &problem)
{
  if (problem.devices.size() != 1) { throw ConfigError("single-device solve needs exactly one device"); }
  return solve(problem);
}

Schedule solve_multi_device(ScheduleProblem const &problem)
{
  if (problem.devices.empty()) { throw ConfigError("multi-device solve needs at least one device"); }
  return solve(problem);
}

Eigen::VectorXd distribute_coarse(Eigen::VectorXd const &duty, Index k)
{
  if (k <= 0) { throw ConfigError("coarse distribution: k must be positive"); }
  Eigen::VectorXd fine = Eigen::VectorXd::Zero(duty.size() * k);
  for (Index c = 0; c < duty.size(); ++c) {
    double const d = std::clamp(duty[c], 0.0, 1.0);
    Index const on = static_cast<Index>(std::floor(d * static_cast<double>(k) + 0.5));
    fine.segment(c * k, on).setOnes();
  }
  return fine;
}

using detail::mat_from;
using detail::mat_json;
using detail::params_from;
using detail::params_json;
using detail::vec_from;
using detail::vec_json;

std::string problem_to_json(ScheduleProblem const &p)
{
  nlohmann::ordered_json j;
  j["horizon"] = p.horizon;
  j["dt_hours"] = p.dt_hours;
  j["power_scale"] = p.power_scale;
  j["objective"] = std::string(to_string(p.objective));
  j["power_mode"] = std::string(to_string(p.power_mode));
  j["variable_mode"] = std::string(to_string(p.variable_mode));
  j["integer_slack"] = p.integer_slack;
  j["control"] = {{"kind", p.control.kind == ControlMode::Kind::FullControl ? "full_control" : "internal_controller"},
                  {"w1", p.control.w1},
                  {"w2", p.control.w2}};
  if (p.control.margin) { j["control"]["margin"] = *p.control.margin; }
  j["options"] = {{"exact_single_bits", p.options.exact_single_bits}, {"exact_joint_bits", p.options.exact_joint_bits},
                  {"tolerance", p.options.tolerance}, {"max_sweeps", p.options.max_sweeps},
                  {"max_cycles", p.options.max_cycles}, {"polish", p.options.polish}};
  j["r_act"] = mat_json(p.r_act);
  j["r_react"] = mat_json(p.r_react);
  j["devices"] = nlohmann::json::array();
  for (auto const &d : p.devices) {
    nlohmann::ordered_json dj;
    dj["id"] = d.id;
    dj["params"] = params_json(d.params);
    dj["x0"] = d.x0;
    dj["channels"] = d.channels;
    dj["exo"] = {{"tem", vec_json(d.exo.tem)}, {"sol", vec_json(d.exo.sol)}, {"wat", vec_json(d.exo.wat)},
                 {"occ", vec_json(d.exo.occ)}};
    j["devices"].push_back(dj);
  }
  return j.dump(1);
}

ScheduleProblem problem_from_json(std::string const &text)
{
  try {
    auto const j = nlohmann::json::parse(text);
    ScheduleProblem p;
    p.horizon = j.at("horizon").get<Index>();
    p.dt_hours = j.value("dt_hours", kReferenceStepHours);
    p.power_scale = j.value("power_scale", 1e-3);
    p.objective = objective_kind_from_string(j.value("objective", std::string("sum_norm")));
    p.power_mode = power_mode_from_string(j.value("power_mode", std::string("both")));
    p.variable_mode = variable_mode_from_string(j.value("variable_mode", std::string("binary")));
    p.integer_slack = j.value("integer_slack", false);
    if (j.contains("control")) {
      auto const &c = j.at("control");
      std::string const kind = c.value("kind", std::string("full_control"));
      if (kind != "full_control" && kind != "internal_controller") { throw ConfigError("unknown control mode " + kind); }
      p.control.kind = kind == "full_control" ? ControlMode::Kind::FullControl : ControlMode::Kind::InternalController;
      p.control.w1 = c.value("w1", 1e6);
      p.control.w2 = c.value("w2", 1e3);
      if (c.contains("margin")) { p.control.margin = c.at("margin").get<double>(); }
    }
    if (j.contains("options")) {
      auto const &o = j.at("options");
      p.options.exact_single_bits = o.value("exact_single_bits", p.options.exact_single_bits);
      p.options.exact_joint_bits = o.value("exact_joint_bits", p.options.exact_joint_bits);
      p.options.tolerance = o.value("tolerance", p.options.tolerance);
      p.options.max_sweeps = o.value("max_sweeps", p.options.max_sweeps);
      p.options.max_cycles = o.value("max_cycles", p.options.max_cycles);
      p.options.polish = o.value("polish", p.options.polish);
    }
    p.r_act = mat_from(j.at("r_act"), p.horizon);
    p.r_react = mat_from(j.at("r_react"), p.horizon);
    for (auto const &dj : j.at("devices")) {
      ScheduledDevice d;
      d.id = dj.at("id").get<std::string>();
      d.params = params_from(dj.at("params"));
      d.x0 = dj.at("x0").get<double>();
      d.channels = dj.value("channels", std::vector<Index>{0});
      auto const &e = dj.at("exo");
      d.exo.tem = vec_from(e.at("tem"));
      d.exo.sol = vec_from(e.at("sol"));
      d.exo.wat = vec_from(e.at("wat"));
      d.exo.occ = vec_from(e.at("occ"));
      p.devices.push_back(std::move(d));
    }
    p.validate();
    return p;
  } catch (nlohmann::json::exception const &e) {
    throw ConfigError(std::string("schedule problem: ") + e.what());
  }
}

std::string schedule_to_json(Schedule const &s)
{
  nlohmann::ordered_json j;
  j["objective"] = s.objective;
  j["exact"] = s.exact;
  j["relaxed_fallback"] = s.relaxed_fallback;
  j["max_violation"] = s.max_violation;
  j["violations"] = s.violations;
  j["u"] = mat_json(s.u);
  j["slacks"] = mat_json(s.slacks);
  j["stats"] = {{"nodes", s.stats.nodes}, {"leaves", s.stats.leaves}, {"sweeps", s.stats.sweeps},
                {"cycles", s.stats.cycles}, {"repair_flips", s.stats.repair_flips},
                {"polish_moves", s.stats.polish_moves}};
  return j.dump(1);
}

} // namespace flexgrid
