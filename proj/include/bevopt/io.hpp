// Copyright 2026 The bevopt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bevopt/ocp.hpp"
#include "bevopt/plan.hpp"
#include "bevopt/plant.hpp"
#include "bevopt/route.hpp"

namespace bevopt::io {

using json = nlohmann::ordered_json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << text;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string zeta_string(std::span<const std::uint8_t> zeta) {
  std::string s;
  for (auto z : zeta) s.push_back(z ? '1' : '0');
  return s;
}

inline std::vector<std::uint8_t> parse_zeta(const std::string& s) {
  std::vector<std::uint8_t> zeta;
  for (char c : s) {
    if (c != '0' && c != '1') throw std::runtime_error("zeta must be a string of 0/1 bits");
    zeta.push_back(c == '1' ? 1 : 0);
  }
  return zeta;
}

// ---------------------------------------------------------------------------
// Parameter files

inline Curve1D curve_from_json(const json& j) {
  std::vector<double> xs, ys;
  for (const auto& pair : j) {
    xs.push_back(pair.at(0).get<double>());
    ys.push_back(pair.at(1).get<double>());
  }
  return Curve1D(std::move(xs), std::move(ys));
}

inline Table2D table_from_json(const json& j) {
  std::vector<double> xs = j.at("soc").get<std::vector<double>>();
  std::vector<double> ys = j.at("temp_c").get<std::vector<double>>();
  std::vector<double> values;
  for (const auto& row : j.at("values"))
    for (const auto& v : row) values.push_back(v.get<double>());
  return Table2D(std::move(xs), std::move(ys), std::move(values));
}

struct ParameterSet {
  BatteryParams battery;
  ThermalActuators actuators;
  CabinModel cabin;
};

inline ParameterSet parameters_from_json(const json& j) {
  ParameterSet p;
  const json& b = j.at("battery");
  p.battery.capacity_coulomb = b.at("capacity_ah").get<double>() * 3600.0;
  p.battery.heat_capacity_j_per_k = b.at("heat_capacity_j_per_k").get<double>();
  p.battery.soc_min = b.at("soc_min").get<double>();
  p.battery.soc_max = b.at("soc_max").get<double>();
  p.battery.tb_min_c = b.at("tb_min_c").get<double>();
  p.battery.tb_max_c = b.at("tb_max_c").get<double>();
  p.battery.ocv_v_by_soc = curve_from_json(b.at("ocv_v_by_soc"));
  p.battery.resistance_ohm_by_temp_c = curve_from_json(b.at("resistance_ohm_by_temp_c"));
  p.battery.dchg_limit_w = table_from_json(b.at("dchg_limit_w"));
  p.battery.chg_limit_w = table_from_json(b.at("chg_limit_w"));
  const json& a = j.at("actuators");
  p.actuators.hvch_max_w = a.at("hvch_max_w").get<double>();
  p.actuators.hvac_max_w = a.at("hvac_max_w").get<double>();
  p.actuators.hp_max_w = a.at("hp_max_w").get<double>();
  p.actuators.eta_hvch = a.at("eta_hvch").get<double>();
  p.actuators.eta_hvac = a.at("eta_hvac").get<double>();
  p.actuators.cop_by_temp_c = curve_from_json(a.at("cop_by_temp_c"));
  p.actuators.ed_loss_fraction = a.at("ed_loss_fraction").get<double>();
  p.actuators.exch_coeff_base_w_per_k = a.at("exch_coeff_base_w_per_k").get<double>();
  p.actuators.exch_coeff_speed_w_s_per_k_m = a.at("exch_coeff_speed_w_s_per_k_m").get<double>();
  const json& c = j.at("cabin");
  p.cabin.set_point_c = c.at("set_point_c").get<double>();
  p.cabin.conductance_w_per_k = c.at("conductance_w_per_k").get<double>();
  p.cabin.aux_power_w = c.at("aux_power_w").get<double>();
  p.battery.validate();
  p.actuators.validate();
  p.cabin.validate();
  return p;
}

inline ParameterSet load_parameters(const std::filesystem::path& path) {
  return parameters_from_json(json::parse(read_file(path)));
}

// ---------------------------------------------------------------------------
// Scenario files

inline Scenario load_scenario(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  const auto dir = path.parent_path();
  Scenario sc;
  const ParameterSet params = load_parameters(dir / j.at("params_json").get<std::string>());
  sc.battery = params.battery;
  sc.actuators = params.actuators;
  sc.cabin = params.cabin;
  sc.cycle = load_drive_cycle(read_file(dir / j.at("cycle_csv").get<std::string>()));
  sc.t_amb_c = j.at("t_amb_c").get<double>();
  sc.tb0_c = j.at("tb0_c").get<double>();
  sc.soc0 = j.at("soc0").get<double>();
  sc.socf = j.at("socf").get<double>();
  sc.time_price_per_h = j.at("time_price_per_h").get<double>();
  sc.detour_penalty = j.at("detour_penalty").get<double>();
  sc.t_chg_max_s = j.at("t_chg_max_s").get<double>();
  for (const auto& cj : j.at("chargers")) {
    ChargerSite site;
    site.s_m = cj.at("s_m").get<double>();
    site.p_grid_max_w = cj.at("p_grid_max_w").get<double>();
    site.energy_price_per_kwh = cj.at("energy_price_per_kwh").get<double>();
    site.occupancy_free_s = cj.value("occupancy_free_s", 0.0);
    site.occupancy_price_per_min = cj.value("occupancy_price_per_min", 0.0);
    site.detour_time_s = cj.at("detour_time_s").get<double>();
    site.detour_energy_wh = cj.at("detour_energy_wh").get<double>();
    sc.sites.push_back(site);
  }
  if (j.contains("overrides")) {
    const json& o = j.at("overrides");
    if (o.contains("hp_max_w")) sc.actuators.hp_max_w = o.at("hp_max_w").get<double>();
    if (o.contains("soc_min")) sc.battery.soc_min = o.at("soc_min").get<double>();
    if (o.contains("ed_loss_fraction"))
      sc.actuators.ed_loss_fraction = o.at("ed_loss_fraction").get<double>();
    if (o.contains("conductance_w_per_k"))
      sc.cabin.conductance_w_per_k = o.at("conductance_w_per_k").get<double>();
  }
  sc.validate();
  return sc;
}

// ---------------------------------------------------------------------------
// Trajectory / solution exports

inline std::string phase_file_name(std::size_t index, const ocp::PhaseTrajectory& ph) {
  char buf[64];
  if (ph.kind == ocp::PhaseKind::drive)
    std::snprintf(buf, sizeof buf, "phase_%02zu_drive.csv", index);
  else
    std::snprintf(buf, sizeof buf, "phase_%02zu_charge_site%d.csv", index, ph.site_index + 1);
  return buf;
}

inline constexpr const char* kTrajectoryHeader =
    "node,soc,tb_c,p_b_w,p_grid_w,p_hvch_b_w,p_hvac_b_w,p_hp_w,hvch_cabin_w,q_pass_w,q_act_w,"
    "q_exh_w";

inline std::string trajectory_phase_csv(const ocp::PhaseTrajectory& ph) {
  std::ostringstream out;
  out << kTrajectoryHeader << "\n";
  for (std::size_t k = 0; k < ph.node.size(); ++k) {
    out << format_double(ph.node[k]) << ',' << format_double(ph.soc[k]) << ','
        << format_double(ph.tb_c[k]) << ',' << format_double(ph.p_b_w[k]) << ','
        << format_double(ph.p_grid_w[k]) << ',' << format_double(ph.p_hvch_b_w[k]) << ','
        << format_double(ph.p_hvac_b_w[k]) << ',' << format_double(ph.p_hp_w[k]) << ','
        << format_double(ph.hvch_cabin_w[k]) << ',' << format_double(ph.q_pass_w[k]) << ','
        << format_double(ph.q_act_w[k]) << ',' << format_double(ph.q_exh_w[k]) << "\n";
  }
  return out.str();
}

inline std::string trace_phase_csv(const plant::PhaseTrace& ph) {
  std::ostringstream out;
  out << kTrajectoryHeader << ",time_s\n";
  for (std::size_t k = 0; k < ph.pos.size(); ++k) {
    out << format_double(ph.pos[k]) << ',' << format_double(ph.soc[k]) << ','
        << format_double(ph.tb_c[k]) << ',' << format_double(ph.p_b_w[k]) << ','
        << format_double(ph.p_grid_w[k]) << ',' << format_double(ph.p_hvch_b_w[k]) << ','
        << format_double(ph.p_hvac_b_w[k]) << ',' << format_double(ph.p_hp_w[k]) << ','
        << format_double(ph.hvch_cabin_w[k]) << ',' << format_double(ph.q_pass_w[k]) << ','
        << format_double(ph.q_act_w[k]) << ',' << format_double(ph.q_exh_w[k]) << ','
        << format_double(ph.time_s[k]) << "\n";
  }
  return out.str();
}

inline json summary_json(const plan::PlanResult& result, const ocp::GridOptions& grid) {
  json j;
  j["status"] = result.feasible ? "converged" : "infeasible";
  j["zeta"] = zeta_string(result.zeta);
  j["total_cost"] = result.total_cost;
  j["cost_breakdown"] = {{"energy", result.trajectory.cost.energy},
                         {"time", result.trajectory.cost.time},
                         {"occupancy", result.trajectory.cost.occupancy},
                         {"detour", result.trajectory.cost.detour},
                         {"total", result.trajectory.cost.total()}};
  j["charged_energy_kwh"] = result.charged_energy_kwh;
  j["combined_time_s"] = result.combined_time_s;
  j["t_chg_s"] = result.trajectory.t_chg_s;
  j["kkt_residual"] = result.kkt_residual;
  j["grid"] = {{"ds_m", grid.ds_m}, {"tau_steps", grid.tau_steps}};
  json combos = json::array();
  for (const auto& c : result.log) {
    json cj;
    cj["zeta"] = zeta_string(c.zeta);
    cj["prescreen_passed"] = c.prescreen_passed;
    cj["status"] = nlp::to_string(c.status);
    if (std::isfinite(c.cost)) cj["cost"] = c.cost;
    if (std::isfinite(c.kkt)) cj["kkt_residual"] = c.kkt;
    cj["iterations"] = c.iterations;
    combos.push_back(cj);
  }
  j["combinations"] = combos;
  json phases = json::array();
  for (std::size_t p = 0; p < result.trajectory.phases.size(); ++p) {
    const auto& ph = result.trajectory.phases[p];
    json pj;
    pj["file"] = phase_file_name(p, ph);
    pj["kind"] = ph.kind == ocp::PhaseKind::drive ? "drive" : "charge";
    pj["site"] = ph.site_index;
    pj["t_chg_s"] = ph.t_chg_s;
    phases.push_back(pj);
  }
  j["phases"] = phases;
  return j;
}

inline void write_solution(const std::filesystem::path& dir, const plan::PlanResult& result,
                           const ocp::GridOptions& grid) {
  std::filesystem::create_directories(dir);
  write_file(dir / "summary.json", summary_json(result, grid).dump(2) + "\n");
  for (std::size_t p = 0; p < result.trajectory.phases.size(); ++p)
    write_file(dir / phase_file_name(p, result.trajectory.phases[p]),
               trajectory_phase_csv(result.trajectory.phases[p]));
}

// Reads a solution directory back into a Trajectory. Exogenous per-node data
// (speed, propulsion) is reattached by rebuilding the phase grids from the
// scenario at the recorded grid options.
inline ocp::Trajectory read_solution(const std::filesystem::path& dir, const Scenario& scenario,
                                     ocp::GridOptions* grid_out = nullptr) {
  const json j = json::parse(read_file(dir / "summary.json"));
  ocp::GridOptions grid;
  grid.ds_m = j.at("grid").at("ds_m").get<double>();
  grid.tau_steps = j.at("grid").at("tau_steps").get<int>();
  if (grid_out) *grid_out = grid;
  const std::vector<std::uint8_t> zeta = parse_zeta(j.at("zeta").get<std::string>());
  const ocp::TranscribedNLP t = ocp::build(scenario, zeta, grid);

  ocp::Trajectory traj;
  traj.zeta = zeta;
  traj.t_chg_s = j.at("t_chg_s").get<std::vector<double>>();
  const json& phases = j.at("phases");
  if (phases.size() != t.grids().size())
    throw std::runtime_error("solution phases do not match scenario/grid layout");
  for (std::size_t p = 0; p < phases.size(); ++p) {
    const ocp::PhaseGrid& g = t.grids()[p];
    ocp::PhaseTrajectory ph;
    ph.kind = g.kind;
    ph.site_index = g.site_index;
    ph.node = g.nodes;
    if (g.kind == ocp::PhaseKind::drive) {
      ph.v_mps = g.v_mps;
      ph.p_prop_w = g.p_prop_w;
    } else {
      ph.v_mps.assign(g.nodes.size(), 0.0);
      ph.p_prop_w.assign(g.nodes.size(), 0.0);
      ph.t_chg_s = phases[p].at("t_chg_s").get<double>();
    }
    const std::string csv = read_file(dir / phases[p].at("file").get<std::string>());
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string tok;
      std::vector<double> row;
      while (std::getline(ls, tok, ',')) row.push_back(std::stod(tok));
      if (row.size() < 12) throw std::runtime_error("short row in " + dir.string());
      ph.soc.push_back(row[1]);
      ph.tb_c.push_back(row[2]);
      ph.p_b_w.push_back(row[3]);
      ph.p_grid_w.push_back(row[4]);
      ph.p_hvch_b_w.push_back(row[5]);
      ph.p_hvac_b_w.push_back(row[6]);
      ph.p_hp_w.push_back(row[7]);
      ph.hvch_cabin_w.push_back(row[8]);
      ph.q_pass_w.push_back(row[9]);
      ph.q_act_w.push_back(row[10]);
      ph.q_exh_w.push_back(row[11]);
      ph.cop.push_back(0.0);
    }
    if (ph.soc.size() != ph.node.size())
      throw std::runtime_error("row count mismatch in " + dir.string());
    traj.phases.push_back(std::move(ph));
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Sweep exports

inline std::string pareto_csv(std::span<const plan::ParetoPoint> points) {
  std::ostringstream out;
  out << "c_t_per_h,combined_time_s,charged_energy_kwh,total_cost,zeta,n_stops,status\n";
  for (const auto& p : points) {
    out << format_double(p.time_price_per_h) << ',';
    if (p.converged)
      out << format_double(p.combined_time_s) << ',' << format_double(p.charged_energy_kwh) << ','
          << format_double(p.total_cost) << ',' << zeta_string(p.zeta) << ',' << p.n_stops
          << ",converged\n";
    else
      out << ",,,,,failed\n";
  }
  return out.str();
}

inline std::string ambient_csv(std::span<const plan::AmbientCell> cells) {
  std::ostringstream out;
  out << "t_amb_c,hp_max_w,charged_energy_kwh,n_stops,reduction_pct,status\n";
  for (const auto& c : cells) {
    out << format_double(c.t_amb_c) << ',' << format_double(c.hp_max_w) << ',';
    if (c.converged) {
      out << format_double(c.charged_energy_kwh) << ',' << c.n_stops << ',';
      if (std::isfinite(c.reduction_pct)) out << format_double(c.reduction_pct);
      out << ",converged\n";
    } else {
      out << ",,,failed\n";
    }
  }
  return out.str();
}

}  // namespace bevopt::io
