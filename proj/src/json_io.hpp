#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "flexgrid/devices.hpp"
#include "flexgrid/errors.hpp"

namespace flexgrid::detail {

inline nlohmann::json vec_json(Eigen::VectorXd const &v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vec_from(nlohmann::json const &j)
{
  auto const v = j.get<std::vector<double>>();
  return Eigen::Map<Eigen::VectorXd const>(v.data(), static_cast<Index>(v.size()));
}

inline nlohmann::json mat_json(Eigen::MatrixXd const &m)
{
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) { rows.push_back(vec_json(m.row(r).transpose())); }
  return rows;
}

inline Eigen::MatrixXd mat_from(nlohmann::json const &j, Index cols)
{
  Eigen::MatrixXd m(static_cast<Index>(j.size()), cols);
  for (Index r = 0; r < m.rows(); ++r) {
    Eigen::VectorXd const row = vec_from(j.at(r));
    if (row.size() != cols) { throw ConfigError("matrix row length mismatch"); }
    m.row(r) = row.transpose();
  }
  return m;
}

inline nlohmann::ordered_json params_json(DeviceParams const &p)
{
  return {{"kind", std::string(to_string(p.kind))}, {"p_rated", p.p_rated}, {"q_rated", p.q_rated},
          {"load_factor", p.load_factor}, {"t_set", p.t_set}, {"t_db", p.t_db}, {"t_ss", p.t_ss},
          {"t_lol", p.t_lol}, {"t_hol", p.t_hol}, {"c_use", p.c_use}, {"c_wat", p.c_wat}, {"c_sol", p.c_sol},
          {"c_los", p.c_los}, {"c_inp", p.c_inp}};
}

inline DeviceParams params_from(nlohmann::json const &j)
{
  DeviceParams p = nominal_params(device_kind_from_string(j.at("kind").get<std::string>()));
  for (auto const &[key, value] : j.items()) {
    if (key == "kind") { continue; }
    if (key == "q_rated") {
      p.q_rated = value.get<double>();
    } else {
      apply_override(p, key, value.get<double>());
    }
  }
  return p;
}

} // namespace flexgrid::detail
