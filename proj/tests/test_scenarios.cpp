#include <cmath>

#include <gtest/gtest.h>

#include "flexgrid/errors.hpp"
#include "flexgrid/scenarios.hpp"

using namespace flexgrid;

namespace {

Topology const &grid()
{
  static Topology const t = default_topology();
  return t;
}

Scenario const &randomized()
{
  static Scenario const s = generate_scenario(randomized_spec(1), grid());
  return s;
}

Scenario const &regular()
{
  static Scenario const s = generate_scenario(regular_spec(1), grid());
  return s;
}

// Device energy under thermostat operation over all consumption, both in kWh.
double share_oracle(Scenario const &s)
{
  double dev = 0.0;
  for (auto const &d : s.devices) {
    UncontrolledTrajectory const u = simulate_uncontrolled(d.params, d.x0, d.exo, s.spec.dt_hours);
    for (Index t = 0; t < u.p.size(); ++t) { dev += u.p[t] * s.spec.dt_hours; }
  }
  double load = 0.0;
  for (auto const &u : s.units) {
    if (u.type != UnitType::Load) { continue; }
    for (Index t = 0; t < u.p.size(); ++t) { load += u.p[t] * s.spec.dt_hours; }
  }
  return dev / (dev + load);
}

} // namespace

TEST(Scenarios, SameSeedSameScenario)
{
  ScenarioSpec spec = randomized_spec(7);
  EXPECT_EQ(scenario_to_json(generate_scenario(spec, grid())), scenario_to_json(generate_scenario(spec, grid())));
  spec = regular_spec(7);
  spec.horizon = 96;
  spec.devices = 20;
  EXPECT_EQ(scenario_to_json(generate_scenario(spec, grid())), scenario_to_json(generate_scenario(spec, grid())));
}

TEST(Scenarios, SeedChangesScenario)
{
  EXPECT_NE(scenario_to_json(generate_scenario(randomized_spec(1), grid())),
            scenario_to_json(generate_scenario(randomized_spec(2), grid())));
}

TEST(Scenarios, ExponentialMeanConverges)
{
  Rng rng(42);
  double const b = 0.37;
  double sum = 0.0;
  int const n = 100000;
  for (int k = 0; k < n; ++k) { sum += rng.exponential(b); }
  EXPECT_NEAR(sum / n, b, 0.02 * b);
}

TEST(Scenarios, PresetSizes)
{
  EXPECT_EQ(randomized().spec.horizon, 96);
  EXPECT_EQ(randomized().devices.size(), 30u);
  EXPECT_EQ(regular().spec.horizon, 288);
  EXPECT_EQ(regular().devices.size(), 150u);
  for (auto const &d : regular().devices) { EXPECT_NE(d.params.kind, DeviceKind::AirConditioner); }
  int kinds[6] = {};
  for (auto const &d : randomized().devices) { ++kinds[static_cast<int>(d.params.kind)]; }
  for (int k : kinds) { EXPECT_EQ(k, 5); }
}

TEST(Scenarios, NineteenDevicesOnOneFeeder)
{
  std::vector<int> per(grid().feeder_count(), 0);
  for (auto const &d : randomized().devices) { ++per[grid().feeder_of_bus(grid().bus_index(d.bus))]; }
  EXPECT_EQ(*std::max_element(per.begin(), per.end()), 19);
  EXPECT_EQ(per[0] + per[1] + per[2], 30);
}

TEST(Scenarios, DevicesStartInsideBand)
{
  for (Scenario const *s : {&randomized(), &regular()}) {
    for (auto const &d : s->devices) {
      ComfortBand const b = d.params.band();
      EXPECT_GE(d.x0, b.t_low);
      EXPECT_LE(d.x0, b.t_up);
      EXPECT_NE(grid().parent_line(grid().bus_index(d.bus)), std::nullopt);
    }
  }
}

TEST(Scenarios, ControllableShareNearTarget)
{
  EXPECT_NEAR(share_oracle(randomized()), 0.31, 0.05);
  EXPECT_NEAR(share_oracle(regular()), 0.51, 0.05);
  EXPECT_NEAR(randomized().controllable_share, share_oracle(randomized()), 1e-9);
  EXPECT_NEAR(regular().controllable_share, share_oracle(regular()), 1e-9);
}

TEST(Scenarios, FeederResidualCrossesZeroEveryDay)
{
  for (Scenario const *s : {&randomized(), &regular()}) {
    Eigen::MatrixXd p;
    Eigen::MatrixXd q;
    unit_residuals(*s, grid(), p, q);
    // Thermostat device load on top of the units.
    for (auto const &d : s->devices) {
      UncontrolledTrajectory const u = simulate_uncontrolled(d.params, d.x0, d.exo, s->spec.dt_hours);
      p.row(grid().bus_index(d.bus)) += 1e-3 * u.p.transpose();
    }
    Index const per_day = 96;
    for (Index f = 0; f < grid().feeder_count(); ++f) {
      Eigen::RowVectorXd total = Eigen::RowVectorXd::Zero(p.cols());
      for (Index b = 0; b < grid().bus_count(); ++b) {
        if (grid().feeder_of_bus(b) == f) { total += p.row(b); }
      }
      for (Index day = 0; day * per_day < total.size(); ++day) {
        auto const seg = total.segment(day * per_day, per_day);
        EXPECT_LT(seg.minCoeff(), 0.0) << "feeder " << f << " day " << day;
        EXPECT_GT(seg.maxCoeff(), 0.0) << "feeder " << f << " day " << day;
      }
    }
  }
}

TEST(Scenarios, UnitSignsAndReactivePower)
{
  for (Scenario const *s : {&randomized(), &regular()}) {
    for (auto const &u : s->units) {
      EXPECT_GE(u.load_factor, 0.8);
      EXPECT_LE(u.load_factor, 1.0);
      double const tan_phi = std::sqrt(1.0 / (u.load_factor * u.load_factor) - 1.0);
      for (Index t = 0; t < u.p.size(); ++t) {
        if (u.type == UnitType::Load) {
          EXPECT_GE(u.p[t], 0.0);
          EXPECT_GE(u.q[t], 0.0);
        } else {
          EXPECT_LE(u.p[t], 0.0);
          EXPECT_LE(u.q[t], 0.0);
        }
        EXPECT_NEAR(std::abs(u.q[t]), std::abs(u.p[t]) * tan_phi, 1e-9);
      }
    }
  }
}

TEST(Scenarios, RegularUsesAllUnitTypes)
{
  int counts[3] = {};
  for (auto const &u : regular().units) { ++counts[static_cast<int>(u.type)]; }
  EXPECT_GT(counts[0], 0);
  EXPECT_GT(counts[1], 0);
  EXPECT_GT(counts[2], 0);
  int rand_pv = 0;
  for (auto const &u : randomized().units) { rand_pv += u.type == UnitType::Pv; }
  EXPECT_EQ(rand_pv, 0);
}

TEST(Scenarios, FlatProfileGivesRating)
{
  ScenarioSpec spec = regular_spec(3);
  spec.horizon = 48;
  spec.devices = 10;
  Profiles flat{Eigen::VectorXd::Ones(48), Eigen::VectorXd::Ones(48), Eigen::VectorXd::Ones(48)};
  Scenario const s = generate_regular(spec, grid(), flat);
  for (auto const &u : s.units) {
    for (Index t = 0; t < 48; ++t) { EXPECT_NEAR(std::abs(u.p[t]), u.rating_kw, 1e-12); }
  }
}

TEST(Scenarios, ShortProfileRejected)
{
  ScenarioSpec spec = regular_spec(3);
  Profiles p{Eigen::VectorXd::Ones(10), Eigen::VectorXd::Ones(10), Eigen::VectorXd::Ones(10)};
  EXPECT_THROW(generate_regular(spec, grid(), p), ConfigError);
}

TEST(Scenarios, ShippedProfilesMatchGenerator)
{
  Profiles const shipped = default_profiles();
  Profiles const fresh = synthetic_profiles(288, kShippedProfileSeed);
  ASSERT_EQ(shipped.pv.size(), 288);
  EXPECT_LE((shipped.pv - fresh.pv).cwiseAbs().maxCoeff(), 5e-7);
  EXPECT_LE((shipped.wind - fresh.wind).cwiseAbs().maxCoeff(), 5e-7);
  EXPECT_LE((shipped.load - fresh.load).cwiseAbs().maxCoeff(), 5e-7);
}

TEST(Scenarios, ShippedPvDarkAtNight)
{
  Eigen::VectorXd const pv = default_profiles().pv;
  for (Index t = 0; t < pv.size(); ++t) {
    double const h = std::fmod(t * 0.25, 24.0);
    if (h <= 6.0 || h >= 20.0) { EXPECT_EQ(pv[t], 0.0) << t; }
  }
  EXPECT_GT(pv.maxCoeff(), 0.3);
}

TEST(Scenarios, ProfilesNormalized)
{
  Profiles const p = default_profiles();
  for (Eigen::VectorXd const *v : {&p.pv, &p.wind, &p.load}) {
    EXPECT_GE(v->minCoeff(), 0.0);
    EXPECT_LE(v->maxCoeff(), 1.0);
  }
  EXPECT_DOUBLE_EQ(p.load.maxCoeff(), 1.0);
}

TEST(Scenarios, ProfileCsv)
{
  Eigen::VectorXd v(3);
  v << 0.0, 0.25, 1.0;
  EXPECT_EQ(profile_to_csv(v), "step,value\n0,0.000000\n1,0.250000\n2,1.000000\n");
  EXPECT_EQ(parse_profile_csv(profile_to_csv(v)), v);
  EXPECT_EQ(parse_profile_csv("0,1.5\r\n1,2\n"), Eigen::Vector2d(1.5, 2.0));
  EXPECT_THROW(parse_profile_csv("step,value\n0,1\n2,1\n"), ConfigError);
  EXPECT_THROW(parse_profile_csv("step,value\n0;1\n"), ConfigError);
  EXPECT_THROW(parse_profile_csv("step,value\n0,abc\n"), ConfigError);
  EXPECT_THROW(parse_profile_csv("step,value\n"), ConfigError);
  EXPECT_THROW(load_profile_csv("/nonexistent/pv.csv"), ConfigError);
}

TEST(Scenarios, AirConditionersSeeSummer)
{
  for (auto const &d : randomized().devices) {
    double const mean = d.exo.tem.mean();
    if (d.params.kind == DeviceKind::AirConditioner) {
      EXPECT_GT(mean, 20.0);
    } else {
      EXPECT_LT(mean, 15.0);
    }
  }
}

TEST(Scenarios, ResidualsSumUnits)
{
  Eigen::MatrixXd p;
  Eigen::MatrixXd q;
  unit_residuals(randomized(), grid(), p, q);
  ASSERT_EQ(p.rows(), grid().bus_count());
  double total = 0.0;
  for (auto const &u : randomized().units) { total += u.p.sum(); }
  EXPECT_NEAR(p.sum(), 1e-3 * total, 1e-9);
  DispatchInput const in = dispatch_input(randomized(), grid());
  EXPECT_EQ(in.residual_p, p);
  EXPECT_EQ(in.devices.size(), 30u);
  EXPECT_NO_THROW(in.validate());
}

TEST(Scenarios, JsonRoundTrip)
{
  std::string const text = scenario_to_json(randomized());
  Scenario const back = scenario_from_json(text);
  EXPECT_EQ(scenario_to_json(back), text);
  EXPECT_EQ(back.devices[3].exo.wat, randomized().devices[3].exo.wat);

  ScenarioSpec spec = regular_spec(9);
  spec.pv_profile = "pv.csv";
  EXPECT_EQ(spec_to_json(spec_from_json(spec_to_json(spec))), spec_to_json(spec));
  // Missing keys take the preset of the kind.
  ScenarioSpec const partial = spec_from_json(R"({"kind": "regular", "seed": 4})");
  EXPECT_EQ(partial.horizon, 288);
  EXPECT_EQ(partial.devices, 150);
  EXPECT_EQ(partial.seed, 4u);
}

TEST(Scenarios, BadSpecs)
{
  EXPECT_THROW(spec_from_json(R"({"kind": "weekly"})"), ConfigError);
  EXPECT_THROW(spec_from_json("{"), ConfigError);
  ScenarioSpec spec = randomized_spec(1);
  spec.feeder_split = {10, 10};
  EXPECT_THROW(generate_scenario(spec, grid()), ConfigError);
  spec = randomized_spec(1);
  spec.feeder_split = {19, 6, 6};
  EXPECT_THROW(generate_scenario(spec, grid()), ConfigError);
  spec = randomized_spec(1);
  spec.controllable_share = 1.0;
  EXPECT_THROW(generate_scenario(spec, grid()), ConfigError);
  spec = randomized_spec(1);
  spec.horizon = 0;
  EXPECT_THROW(generate_scenario(spec, grid()), ConfigError);
}
