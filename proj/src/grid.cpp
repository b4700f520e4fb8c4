#include "flexgrid/grid.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "flexgrid/default_topology_data.hpp"
#include "flexgrid/errors.hpp"

namespace flexgrid {

PerUnitImpedance transformer_impedance(Transformer const &trafo, double system_base_mva)
{
  if (!(trafo.s_rated_mva > 0.0)) { throw ConfigError("transformer " + trafo.id + ": rated power must be positive"); }
  if (trafo.u_r_pct < 0.0 || trafo.u_r_pct >= trafo.u_k_pct) {
    throw ConfigError("transformer " + trafo.id + ": invalid nameplate, need 0 <= u_r < u_k");
  }
  double const scale = system_base_mva / trafo.s_rated_mva;
  double const z = trafo.u_k_pct / 100.0;
  double const r = trafo.u_r_pct / 100.0;
  return {r * scale, std::sqrt(z * z - r * r) * scale};
}

double impedance_base_ohm(double base_kv, double base_mva) { return base_kv * base_kv / base_mva; }

std::complex<double> ohm_to_per_unit(std::complex<double> z_ohm, double base_kv, double base_mva)
{
  return z_ohm / impedance_base_ohm(base_kv, base_mva);
}

std::complex<double> per_unit_to_ohm(std::complex<double> z_pu, double base_kv, double base_mva)
{
  return z_pu * impedance_base_ohm(base_kv, base_mva);
}

Topology::Topology(std::vector<Bus> buses, std::vector<Line> lines, std::vector<Transformer> transformers,
                   std::string slack_bus, double slack_kv, double base_mva)
  : buses_(std::move(buses)),
    lines_(std::move(lines)),
    transformers_(std::move(transformers)),
    slack_bus_(std::move(slack_bus)),
    slack_kv_(slack_kv),
    base_mva_(base_mva)
{
  build();
}

Index Topology::bus_index(std::string const &id) const
{
  auto it = bus_by_id_.find(id);
  if (it == bus_by_id_.end()) { throw ConfigError("unknown bus '" + id + "'"); }
  return it->second;
}

Index Topology::line_index(std::string const &id) const
{
  auto it = line_by_id_.find(id);
  if (it == line_by_id_.end()) { throw ConfigError("unknown line '" + id + "'"); }
  return it->second;
}

Index Topology::transformer_index(std::string const &id) const
{
  auto it = trafo_by_id_.find(id);
  if (it == trafo_by_id_.end()) { throw ConfigError("unknown transformer '" + id + "'"); }
  return it->second;
}

std::optional<Index> Topology::parent_line(Index bus) const
{
  if (parent_line_[bus] < 0) { return std::nullopt; }
  return parent_line_[bus];
}

std::vector<Index> Topology::feeder_lines(Index feeder) const
{
  std::vector<Index> out;
  for (Index l = 0; l < line_count(); ++l) {
    if (bus_feeder_[line_from_[l]] == feeder) { out.push_back(l); }
  }
  return out;
}

std::vector<Index> Topology::path_lines(Index bus) const
{
  std::vector<Index> path;
  for (Index b = bus; parent_line_[b] >= 0; b = line_from_[parent_line_[b]]) {
    path.push_back(parent_line_[b]);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

PerUnitImpedance Topology::line_impedance(Index line) const
{
  Line const &l = lines_[line];
  std::complex<double> const z_ohm{l.r_ohm_per_km * l.length_km, l.x_ohm_per_km * l.length_km};
  std::complex<double> const z = ohm_to_per_unit(z_ohm, buses_[line_from_[line]].nominal_kv, base_mva_);
  return {z.real(), z.imag()};
}

void Topology::build()
{
  if (!(base_mva_ > 0.0)) { throw ConfigError("topology: base_mva must be positive"); }
  Index const nb = bus_count();
  Index const nl = line_count();
  Index const nf = feeder_count();
  if (nf == 0) { throw ConfigError("topology: at least one transformer required"); }

  for (Index t = 0; t < nf; ++t) {
    auto const &tr = transformers_[t];
    if (!trafo_by_id_.emplace(tr.id, t).second) { throw ConfigError("duplicate transformer id '" + tr.id + "'"); }
    if (!(tr.tap_ratio > 0.0)) { throw ConfigError("transformer " + tr.id + ": tap ratio must be positive"); }
    transformer_impedance(tr, base_mva_);
  }
  bus_feeder_.assign(nb, -1);
  for (Index b = 0; b < nb; ++b) {
    auto const &bus = buses_[b];
    if (!bus_by_id_.emplace(bus.id, b).second) { throw ConfigError("duplicate bus id '" + bus.id + "'"); }
    auto it = trafo_by_id_.find(bus.feeder_id);
    if (it == trafo_by_id_.end()) {
      throw ConfigError("bus '" + bus.id + "' references unknown feeder transformer '" + bus.feeder_id + "'");
    }
    if (!(bus.nominal_kv > 0.0)) { throw ConfigError("bus '" + bus.id + "': nominal voltage must be positive"); }
    bus_feeder_[b] = it->second;
  }
  for (Index l = 0; l < nl; ++l) {
    auto const &line = lines_[l];
    if (!line_by_id_.emplace(line.id, l).second) { throw ConfigError("duplicate line id '" + line.id + "'"); }
    if (!(line.r_ohm_per_km > 0.0) || !(line.x_ohm_per_km > 0.0) || !(line.length_km > 0.0)) {
      throw ConfigError("line '" + line.id + "': r, x and length must be positive");
    }
    if (!bus_by_id_.count(line.from_bus) || !bus_by_id_.count(line.to_bus)) {
      throw ConfigError("line '" + line.id + "' references an unknown bus");
    }
    if (line.from_bus == line.to_bus) { throw ConfigError("line '" + line.id + "' is a self-loop"); }
    if (bus_feeder_[bus_by_id_[line.from_bus]] != bus_feeder_[bus_by_id_[line.to_bus]]) {
      throw ConfigError("line '" + line.id + "' connects two feeders");
    }
  }

  feeder_buses_.assign(nf, {});
  for (Index b = 0; b < nb; ++b) { feeder_buses_[bus_feeder_[b]].push_back(b); }
  feeder_root_.assign(nf, -1);
  for (Index t = 0; t < nf; ++t) {
    auto const &tr = transformers_[t];
    if (feeder_buses_[t].empty()) { throw ConfigError("transformer '" + tr.id + "' feeds no bus"); }
    if (tr.lv_bus.empty()) {
      feeder_root_[t] = feeder_buses_[t].front();
      transformers_[t].lv_bus = buses_[feeder_root_[t]].id;
    } else {
      auto it = bus_by_id_.find(tr.lv_bus);
      if (it == bus_by_id_.end() || bus_feeder_[it->second] != t) {
        throw ConfigError("transformer '" + tr.id + "': LV bus '" + tr.lv_bus + "' is not a bus of its feeder");
      }
      feeder_root_[t] = it->second;
    }
  }

  // Orient every line away from its feeder root; detect cycles and islands.
  std::vector<std::vector<std::pair<Index, Index>>> adj(nb); // (line, neighbour)
  for (Index l = 0; l < nl; ++l) {
    Index const a = bus_by_id_[lines_[l].from_bus];
    Index const b = bus_by_id_[lines_[l].to_bus];
    adj[a].emplace_back(l, b);
    adj[b].emplace_back(l, a);
  }
  parent_line_.assign(nb, -1);
  depth_.assign(nb, -1);
  child_lines_.assign(nb, {});
  line_from_.assign(nl, -1);
  line_to_.assign(nl, -1);
  feeder_order_.assign(nf, {});
  for (Index t = 0; t < nf; ++t) {
    std::deque<Index> queue{feeder_root_[t]};
    depth_[feeder_root_[t]] = 0;
    while (!queue.empty()) {
      Index const bus = queue.front();
      queue.pop_front();
      feeder_order_[t].push_back(bus);
      for (auto const &[l, nbr] : adj[bus]) {
        if (l == parent_line_[bus]) { continue; }
        if (depth_[nbr] >= 0) { throw ConfigError("cycle detected: line '" + lines_[l].id + "' closes a loop"); }
        depth_[nbr] = depth_[bus] + 1;
        parent_line_[nbr] = l;
        line_from_[l] = bus;
        line_to_[l] = nbr;
        child_lines_[bus].push_back(l);
        queue.push_back(nbr);
      }
    }
  }
  for (Index b = 0; b < nb; ++b) {
    if (depth_[b] < 0) { throw ConfigError("dangling bus '" + buses_[b].id + "' is not connected to its feeder"); }
  }
  height_.assign(nb, 0);
  for (Index t = 0; t < nf; ++t) {
    auto const &order = feeder_order_[t];
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if (parent_line_[*it] >= 0) {
        Index const parent = line_from_[parent_line_[*it]];
        height_[parent] = std::max(height_[parent], height_[*it] + 1);
      }
    }
  }
}

namespace {

std::string id_string(nlohmann::json const &v)
{
  if (v.is_string()) { return v.get<std::string>(); }
  if (v.is_number_integer()) { return std::to_string(v.get<long long>()); }
  throw ConfigError("identifier must be a string or integer");
}

} // namespace

Topology parse_topology(std::string const &json_text)
{
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (nlohmann::json::exception const &e) {
    throw ConfigError(std::string("topology: ") + e.what());
  }
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Transformer> trafos;
  std::string where = "topology";
  try {
    for (auto const &b : doc.at("buses")) {
      where = "bus";
      buses.push_back({id_string(b.at("id")), id_string(b.at("feeder")), b.value("kv", 0.4)});
    }
    for (auto const &l : doc.at("lines")) {
      where = "line";
      Line line;
      line.id = id_string(l.at("id"));
      where = "line " + line.id;
      line.from_bus = id_string(l.at("from"));
      line.to_bus = id_string(l.at("to"));
      line.r_ohm_per_km = l.at("r").get<double>();
      line.x_ohm_per_km = l.at("x").get<double>();
      line.length_km = l.at("len_km").get<double>();
      line.i_max_a = l.at("imax_a").get<double>();
      line.b_sh = l.value("bsh", 0.0);
      lines.push_back(line);
    }
    for (auto const &t : doc.at("transformers")) {
      where = "transformer";
      Transformer tr;
      tr.id = id_string(t.at("id"));
      where = "transformer " + tr.id;
      tr.lv_bus = t.contains("lv_bus") ? id_string(t.at("lv_bus")) : std::string{};
      tr.hv_kv = t.at("hv_kv").get<double>();
      tr.lv_kv = t.at("lv_kv").get<double>();
      tr.s_rated_mva = t.at("s_mva").get<double>();
      tr.u_k_pct = t.at("uk_pct").get<double>();
      tr.u_r_pct = t.at("ur_pct").get<double>();
      tr.tap_ratio = t.value("tap", 1.0);
      tr.phase_shift_rad = t.value("phase_deg", 0.0) * std::numbers::pi / 180.0;
      trafos.push_back(tr);
    }
    where = "slack";
    std::string slack_bus = "MV";
    double slack_kv = 20.0;
    if (doc.contains("slack")) {
      slack_bus = id_string(doc.at("slack").at("bus"));
      slack_kv = doc.at("slack").at("kv").get<double>();
    }
    return Topology(std::move(buses), std::move(lines), std::move(trafos), slack_bus, slack_kv,
                    doc.value("base_mva", 0.5));
  } catch (nlohmann::json::exception const &e) {
    throw ConfigError("topology (" + where + "): " + e.what());
  }
}

Topology load_topology(std::string const &path)
{
  std::ifstream in(path);
  if (!in) { throw ConfigError("cannot open topology file " + path); }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_topology(buf.str());
}

std::string topology_to_json(Topology const &topology)
{
  nlohmann::json doc;
  doc["base_mva"] = topology.base_mva();
  doc["slack"] = {{"bus", topology.slack_bus()}, {"kv", topology.slack_kv()}};
  doc["buses"] = nlohmann::json::array();
  for (auto const &b : topology.buses()) { doc["buses"].push_back({{"id", b.id}, {"feeder", b.feeder_id}, {"kv", b.nominal_kv}}); }
  doc["lines"] = nlohmann::json::array();
  for (auto const &l : topology.lines()) {
    doc["lines"].push_back({{"id", l.id}, {"from", l.from_bus}, {"to", l.to_bus}, {"r", l.r_ohm_per_km}, {"x", l.x_ohm_per_km},
                            {"len_km", l.length_km}, {"imax_a", l.i_max_a}, {"bsh", l.b_sh}});
  }
  doc["transformers"] = nlohmann::json::array();
  for (auto const &t : topology.transformers()) {
    doc["transformers"].push_back({{"id", t.id}, {"lv_bus", t.lv_bus}, {"hv_kv", t.hv_kv}, {"lv_kv", t.lv_kv},
                                   {"s_mva", t.s_rated_mva}, {"uk_pct", t.u_k_pct}, {"ur_pct", t.u_r_pct},
                                   {"tap", t.tap_ratio}, {"phase_deg", t.phase_shift_rad * 180.0 / std::numbers::pi}});
  }
  return doc.dump(1);
}

Topology default_topology() { return parse_topology(detail::kDefaultTopologyJson); }

std::vector<Index> downstream_buses(Topology const &topology, Index line)
{
  if (line < 0 || line >= topology.line_count()) { throw ConfigError("unknown line index"); }
  std::vector<Index> out;
  std::vector<Index> stack{topology.line_to(line)};
  while (!stack.empty()) {
    Index const b = stack.back();
    stack.pop_back();
    out.push_back(b);
    for (Index l : topology.child_lines(b)) { stack.push_back(topology.line_to(l)); }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::set<std::string> downstream_buses(Topology const &topology, std::string const &line_id)
{
  std::set<std::string> ids;
  for (Index b : downstream_buses(topology, topology.line_index(line_id))) { ids.insert(topology.buses()[b].id); }
  return ids;
}

} // namespace flexgrid
