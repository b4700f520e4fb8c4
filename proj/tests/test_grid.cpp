#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include <gtest/gtest.h>

#include "flexgrid/errors.hpp"
#include "flexgrid/grid.hpp"

using namespace flexgrid;

namespace {

std::string two_bus_json()
{
  return R"({
    "buses": [{"id": "lv", "feeder": "T1", "kv": 0.4}, {"id": "b1", "feeder": "T1", "kv": 0.4}],
    "lines": [{"id": "L1", "from": "lv", "to": "b1", "r": 0.397, "x": 0.279, "len_km": 0.03, "imax_a": 199}],
    "transformers": [{"id": "T1", "hv_kv": 20, "lv_kv": 0.4, "s_mva": 0.5, "uk_pct": 4.1, "ur_pct": 1.0}],
    "slack": {"bus": "MV", "kv": 20}
  })";
}

// Reachability oracle: undirected BFS from the line's far end with the line removed,
// never crossing the near end.
std::set<std::string> reach_without(Topology const &topo, Index line)
{
  auto const &lines = topo.lines();
  std::string const near = topo.buses()[topo.line_from(line)].id;
  std::set<std::string> seen{topo.buses()[topo.line_to(line)].id};
  std::deque<std::string> queue{*seen.begin()};
  while (!queue.empty()) {
    std::string const b = queue.front();
    queue.pop_front();
    for (Index l = 0; l < topo.line_count(); ++l) {
      if (l == line) { continue; }
      std::string other;
      if (lines[l].from_bus == b) { other = lines[l].to_bus; }
      if (lines[l].to_bus == b) { other = lines[l].from_bus; }
      if (other.empty() || other == near || seen.count(other)) { continue; }
      seen.insert(other);
      queue.push_back(other);
    }
  }
  return seen;
}

} // namespace

TEST(Topology, DefaultLayoutCounts)
{
  Topology const t = default_topology();
  EXPECT_EQ(t.bus_count(), 41);
  EXPECT_EQ(t.line_count(), 38);
  EXPECT_EQ(t.feeder_count(), 3);
  for (Index f = 0; f < t.feeder_count(); ++f) {
    EXPECT_EQ(static_cast<Index>(t.feeder_lines(f).size()), static_cast<Index>(t.feeder_buses(f).size()) - 1);
  }
  EXPECT_TRUE(t.has_line("218874"));
}

TEST(Topology, TwoBusMinimal)
{
  Topology const t = parse_topology(two_bus_json());
  EXPECT_EQ(t.bus_count(), 2);
  EXPECT_EQ(t.feeder_root(0), t.bus_index("lv"));
  EXPECT_EQ(t.depth(t.bus_index("b1")), 1);
}

TEST(Topology, RejectsCycleNamingBackEdge)
{
  std::string json = R"({
    "buses": [{"id": "a", "feeder": "T"}, {"id": "b", "feeder": "T"}, {"id": "c", "feeder": "T"}],
    "lines": [{"id": "ab", "from": "a", "to": "b", "r": 1, "x": 1, "len_km": 0.1, "imax_a": 100},
              {"id": "bc", "from": "b", "to": "c", "r": 1, "x": 1, "len_km": 0.1, "imax_a": 100},
              {"id": "ca", "from": "c", "to": "a", "r": 1, "x": 1, "len_km": 0.1, "imax_a": 100}],
    "transformers": [{"id": "T", "hv_kv": 20, "lv_kv": 0.4, "s_mva": 0.5, "uk_pct": 4, "ur_pct": 1}]
  })";
  try {
    parse_topology(json);
    FAIL() << "cycle accepted";
  } catch (ConfigError const &e) {
    std::string const msg = e.what();
    EXPECT_NE(msg.find("cycle"), std::string::npos);
    EXPECT_TRUE(msg.find("'bc'") != std::string::npos || msg.find("'ca'") != std::string::npos) << msg;
  }
}

TEST(Topology, RejectsDuplicatesAndDanglingBuses)
{
  std::string dup = two_bus_json();
  dup.replace(dup.find("\"b1\", \"feeder\""), 4, "\"lv\"");
  EXPECT_THROW(parse_topology(dup), ConfigError);

  std::string dangling = R"({
    "buses": [{"id": "a", "feeder": "T"}, {"id": "b", "feeder": "T"}, {"id": "z", "feeder": "T"}],
    "lines": [{"id": "ab", "from": "a", "to": "b", "r": 1, "x": 1, "len_km": 0.1, "imax_a": 100}],
    "transformers": [{"id": "T", "hv_kv": 20, "lv_kv": 0.4, "s_mva": 0.5, "uk_pct": 4, "ur_pct": 1}]
  })";
  try {
    parse_topology(dangling);
    FAIL();
  } catch (ConfigError const &e) {
    EXPECT_NE(std::string(e.what()).find("'z'"), std::string::npos);
  }

  std::string unknown = two_bus_json();
  unknown.replace(unknown.find("\"to\": \"b1\""), 10, "\"to\": \"qq\"");
  EXPECT_THROW(parse_topology(unknown), ConfigError);
}

TEST(Downstream, LeafAndRootLines)
{
  Topology const t = default_topology();
  for (Index l = 0; l < t.line_count(); ++l) {
    Index const to = t.line_to(l);
    if (t.child_lines(to).empty()) {
      EXPECT_EQ(downstream_buses(t, l), std::vector<Index>{to});
    }
  }
  for (Index f = 0; f < t.feeder_count(); ++f) {
    Index const root = t.feeder_root(f);
    ASSERT_EQ(t.child_lines(root).size(), 1u);
    auto const down = downstream_buses(t, t.child_lines(root).front());
    EXPECT_EQ(down.size(), t.feeder_buses(f).size() - 1);
  }
}

TEST(Downstream, MatchesReachabilityOracle)
{
  Topology const t = default_topology();
  for (Index l = 0; l < t.line_count(); ++l) {
    EXPECT_EQ(downstream_buses(t, t.lines()[l].id), reach_without(t, l)) << t.lines()[l].id;
  }
  EXPECT_THROW(downstream_buses(t, std::string("nope")), ConfigError);
}

TEST(Downstream, SiblingsDisjointAndComposeParent)
{
  Topology const t = default_topology();
  for (Index b = 0; b < t.bus_count(); ++b) {
    std::set<Index> uni{b};
    for (Index l : t.child_lines(b)) {
      for (Index d : downstream_buses(t, l)) { EXPECT_TRUE(uni.insert(d).second) << "overlap at bus " << d; }
    }
    if (auto parent = t.parent_line(b)) {
      auto const down = downstream_buses(t, *parent);
      EXPECT_EQ(std::set<Index>(down.begin(), down.end()), uni);
    }
  }
}

TEST(Impedance, TransformerNameplate)
{
  Transformer tr;
  tr.id = "218979";
  tr.s_rated_mva = 0.55;
  tr.u_k_pct = 4.09;
  tr.u_r_pct = 0.993;
  PerUnitImpedance const z = transformer_impedance(tr, 0.55);
  EXPECT_NEAR(z.r, 0.00993, 1e-12);
  EXPECT_NEAR(z.x, std::sqrt(0.0409 * 0.0409 - 0.00993 * 0.00993), 1e-12);
  EXPECT_NEAR(z.x, 0.03968, 1e-5);
  PerUnitImpedance const z2 = transformer_impedance(tr, 1.1);
  EXPECT_NEAR(z2.r, 2 * z.r, 1e-15);
  EXPECT_NEAR(z2.x, 2 * z.x, 1e-15);
  tr.u_r_pct = 0.0;
  EXPECT_NEAR(transformer_impedance(tr, 0.55).x, 0.0409, 1e-15);
  tr.u_r_pct = 5.0;
  EXPECT_THROW(transformer_impedance(tr, 0.55), ConfigError);
}

TEST(Impedance, PerUnitRoundTrip)
{
  std::complex<double> const z{0.397 * 0.03, 0.279 * 0.03};
  auto const pu = ohm_to_per_unit(z, 0.4, 0.5);
  EXPECT_NEAR(pu.real(), 0.397 * 0.03 / 0.32, 1e-15);
  auto const back = per_unit_to_ohm(pu, 0.4, 0.5);
  EXPECT_NEAR(std::abs(back - z), 0.0, 1e-12);
}

TEST(Impedance, LineSeriesAdmittance)
{
  Topology const t = default_topology();
  Index const l = t.line_index("219009");
  PerUnitImpedance const z = t.line_impedance(l);
  EXPECT_NEAR(z.r, 0.397 * 0.03 / (0.4 * 0.4 / 0.5), 1e-15);
  std::complex<double> const y = z.y();
  EXPECT_NEAR(y.real(), z.g(), 1e-9);
  EXPECT_NEAR(y.imag(), z.b(), 1e-9);
  EXPECT_LT(z.b(), 0.0);
}

TEST(Topology, JsonRoundTrip)
{
  Topology const t = default_topology();
  Topology const u = parse_topology(topology_to_json(t));
  EXPECT_EQ(u.bus_count(), t.bus_count());
  EXPECT_EQ(u.line_count(), t.line_count());
  for (Index l = 0; l < t.line_count(); ++l) { EXPECT_EQ(u.line_from(l), t.line_from(l)); }
}
