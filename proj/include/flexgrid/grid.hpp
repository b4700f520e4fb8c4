#pragma once

#include <complex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace flexgrid {

using Index = Eigen::Index;

struct Bus
{
  std::string id;
  std::string feeder_id; ///< id of the feeding transformer
  double nominal_kv = 0.4;
};

struct Line
{
  std::string id;
  std::string from_bus;
  std::string to_bus;
  double r_ohm_per_km = 0.0;
  double x_ohm_per_km = 0.0;
  double length_km = 0.0;
  double i_max_a = 0.0;
  double b_sh = 0.0; ///< shunt susceptance at each end, per unit on the system base
};

struct Transformer
{
  std::string id;
  std::string lv_bus;
  double hv_kv = 20.0;
  double lv_kv = 0.4;
  double s_rated_mva = 0.0;
  double u_k_pct = 0.0;
  double u_r_pct = 0.0;
  double tap_ratio = 1.0;
  double phase_shift_rad = 0.0;
};

/// Series impedance in per unit.
struct PerUnitImpedance
{
  double r = 0.0;
  double x = 0.0;

  std::complex<double> z() const { return {r, x}; }
  /// Series admittance y = g + jb = 1/z.
  std::complex<double> y() const { return 1.0 / z(); }
  double g() const { return r / (r * r + x * x); }
  double b() const { return -x / (r * r + x * x); }
};

/// Short-circuit voltage and copper losses to per-unit (r, x) on the system base.
PerUnitImpedance transformer_impedance(Transformer const &trafo, double system_base_mva);

double impedance_base_ohm(double base_kv, double base_mva);
std::complex<double> ohm_to_per_unit(std::complex<double> z_ohm, double base_kv, double base_mva);
std::complex<double> per_unit_to_ohm(std::complex<double> z_pu, double base_kv, double base_mva);

/// Radial network: a forest with one tree per transformer, rooted at the
/// transformer's LV bus. The MV slack bus is implicit (not in `buses()`).
///
/// After construction every line is oriented from the transformer side
/// (`line_from`) to the far side (`line_to`).
class Topology
{
public:
  Topology(std::vector<Bus> buses, std::vector<Line> lines, std::vector<Transformer> transformers,
           std::string slack_bus = "MV", double slack_kv = 20.0, double base_mva = 0.5);

  std::vector<Bus> const &buses() const { return buses_; }
  std::vector<Line> const &lines() const { return lines_; }
  std::vector<Transformer> const &transformers() const { return transformers_; }
  std::string const &slack_bus() const { return slack_bus_; }
  double slack_kv() const { return slack_kv_; }
  double base_mva() const { return base_mva_; }

  Index bus_count() const { return static_cast<Index>(buses_.size()); }
  Index line_count() const { return static_cast<Index>(lines_.size()); }
  Index feeder_count() const { return static_cast<Index>(transformers_.size()); }

  Index bus_index(std::string const &id) const;
  Index line_index(std::string const &id) const;
  Index transformer_index(std::string const &id) const;
  bool has_line(std::string const &id) const { return line_by_id_.count(id) != 0; }

  Index feeder_of_bus(Index bus) const { return bus_feeder_[bus]; }
  Index feeder_root(Index feeder) const { return feeder_root_[feeder]; }
  /// Buses of one feeder, ascending index.
  std::vector<Index> const &feeder_buses(Index feeder) const { return feeder_buses_[feeder]; }
  std::vector<Index> feeder_lines(Index feeder) const;

  /// Line feeding the bus from the transformer side; nullopt for a feeder root.
  std::optional<Index> parent_line(Index bus) const;
  std::vector<Index> const &child_lines(Index bus) const { return child_lines_[bus]; }
  Index line_from(Index line) const { return line_from_[line]; }
  Index line_to(Index line) const { return line_to_[line]; }
  Index depth(Index bus) const { return depth_[bus]; }
  /// Height of the subtree hanging below the bus (0 for a leaf).
  Index subtree_height(Index bus) const { return height_[bus]; }
  /// Buses of a feeder in breadth-first order from the root.
  std::vector<Index> const &feeder_order(Index feeder) const { return feeder_order_[feeder]; }
  /// Lines on the path from the feeder root down to the bus.
  std::vector<Index> path_lines(Index bus) const;

  /// Series impedance of a line in per unit of its bus voltage level.
  PerUnitImpedance line_impedance(Index line) const;

private:
  void build();

  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::vector<Transformer> transformers_;
  std::string slack_bus_;
  double slack_kv_;
  double base_mva_;

  std::unordered_map<std::string, Index> bus_by_id_;
  std::unordered_map<std::string, Index> line_by_id_;
  std::unordered_map<std::string, Index> trafo_by_id_;
  std::vector<Index> bus_feeder_;
  std::vector<Index> feeder_root_;
  std::vector<std::vector<Index>> feeder_buses_;
  std::vector<std::vector<Index>> feeder_order_;
  std::vector<Index> parent_line_;
  std::vector<std::vector<Index>> child_lines_;
  std::vector<Index> line_from_;
  std::vector<Index> line_to_;
  std::vector<Index> depth_;
  std::vector<Index> height_;
};

/// Topology JSON: {buses:[{id,feeder,kv}], lines:[{id,from,to,r,x,len_km,imax_a,bsh}],
/// transformers:[{id,lv_bus?,hv_kv,lv_kv,s_mva,uk_pct,ur_pct,tap,phase_deg}], slack:{bus,kv}, base_mva?}.
/// Throws ConfigError naming the offending element (duplicate id, dangling
/// bus, unknown endpoint, cycle back-edge).
Topology parse_topology(std::string const &json_text);
Topology load_topology(std::string const &path);
std::string topology_to_json(Topology const &topology);

/// The shipped 41-bus, 38-line, 3-transformer reference grid.
Topology default_topology();

/// Buses on the far side of the line from the transformer, including its
/// to-bus, ascending index.
std::vector<Index> downstream_buses(Topology const &topology, Index line);
std::set<std::string> downstream_buses(Topology const &topology, std::string const &line_id);

} // namespace flexgrid
