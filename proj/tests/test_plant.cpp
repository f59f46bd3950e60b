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

#include <catch2/catch.hpp>
#include <cmath>

#include "bevopt/plan.hpp"
#include "bevopt/plant.hpp"
#include "test_helpers.hpp"

using namespace bevopt;
using bevopt::testing::site_at;
using bevopt::testing::toy_scenario;

namespace {

// Trajectory with a single charging phase (no detour), for closed-form
// stationary oracles.
ocp::Trajectory parked_trajectory(int tau_intervals, double t_chg_s, const Control& u) {
  ocp::Trajectory traj;
  traj.zeta = {1};
  traj.t_chg_s = {t_chg_s};
  ocp::PhaseTrajectory ph;
  ph.kind = ocp::PhaseKind::charge;
  ph.site_index = 0;
  ph.t_chg_s = t_chg_s;
  for (int k = 0; k <= tau_intervals; ++k) {
    ph.node.push_back(static_cast<double>(k) / tau_intervals);
    ph.v_mps.push_back(0.0);
    ph.p_prop_w.push_back(0.0);
    ph.soc.push_back(0.0);
    ph.tb_c.push_back(0.0);
    ph.p_b_w.push_back(u.p_b_w);
    ph.p_grid_w.push_back(u.p_grid_w);
    ph.p_hvch_b_w.push_back(u.p_hvch_b_w);
    ph.p_hvac_b_w.push_back(u.p_hvac_b_w);
    ph.p_hp_w.push_back(u.p_hp_w);
    ph.hvch_cabin_w.push_back(0.0);
    ph.q_pass_w.push_back(0.0);
    ph.q_act_w.push_back(0.0);
    ph.q_exh_w.push_back(0.0);
    ph.cop.push_back(0.0);
  }
  traj.phases.push_back(std::move(ph));
  return traj;
}

Scenario parked_scenario(double t_amb_c, double tb0_c) {
  Scenario sc = toy_scenario({16000.0}, t_amb_c);
  sc.tb0_c = tb0_c;
  sc.sites[0].detour_time_s = 0.0;
  sc.sites[0].detour_energy_wh = 0.0;
  return sc;
}

// Single-step-per-interval RK4 rollout of a driving phase, mirroring the
// transcription's integration rule; used as the reference trajectory for
// grid-resolution checks.
ocp::PhaseTrajectory rollout_drive(const Scenario& sc, const ocp::PhaseGrid& grid,
                                   const Control& u) {
  ocp::PhaseTrajectory ph;
  ph.kind = ocp::PhaseKind::drive;
  ph.node = grid.nodes;
  ph.v_mps = grid.v_mps;
  ph.p_prop_w = grid.p_prop_w;
  double soc = sc.soc0, tb = sc.tb0_c;
  for (std::size_t k = 0; k < grid.nodes.size(); ++k) {
    ph.soc.push_back(soc);
    ph.tb_c.push_back(tb);
    ph.p_b_w.push_back(u.p_b_w);
    ph.p_grid_w.push_back(0.0);
    ph.p_hvch_b_w.push_back(u.p_hvch_b_w);
    ph.p_hvac_b_w.push_back(u.p_hvac_b_w);
    ph.p_hp_w.push_back(u.p_hp_w);
    ph.hvch_cabin_w.push_back(0.0);
    ph.q_pass_w.push_back(0.0);
    ph.q_act_w.push_back(0.0);
    ph.q_exh_w.push_back(0.0);
    ph.cop.push_back(0.0);
    if (k + 1 == grid.nodes.size()) break;
    const double h = grid.nodes[k + 1] - grid.nodes[k];
    auto f = [&](double s_soc, double s_tb, double v, double prop) {
      auto r = state_rate_per_second(sc.battery, sc.actuators, s_soc, s_tb, u.p_hvch_b_w,
                                     u.p_hvac_b_w, u.p_hp_w, u.p_b_w, v, prop, sc.t_amb_c);
      r.dsoc /= v;
      r.dtb /= v;
      return r;
    };
    const double v0 = grid.v_mps[k], v1 = grid.v_mps[k + 1], vm = 0.5 * (v0 + v1);
    const double p0 = grid.p_prop_w[k], p1 = grid.p_prop_w[k + 1], pm = 0.5 * (p0 + p1);
    const auto k1 = f(soc, tb, v0, p0);
    const auto k2 = f(soc + 0.5 * h * k1.dsoc, tb + 0.5 * h * k1.dtb, vm, pm);
    const auto k3 = f(soc + 0.5 * h * k2.dsoc, tb + 0.5 * h * k2.dtb, vm, pm);
    const auto k4 = f(soc + h * k3.dsoc, tb + h * k3.dtb, v1, p1);
    soc += h / 6.0 * (k1.dsoc + 2 * k2.dsoc + 2 * k3.dsoc + k4.dsoc);
    tb += h / 6.0 * (k1.dtb + 2 * k2.dtb + 2 * k3.dtb + k4.dtb);
  }
  return ph;
}

ocp::Trajectory drive_only_trajectory(const Scenario& sc, double ds_m, const Control& u) {
  ocp::PhaseGrid grid;
  grid.kind = ocp::PhaseKind::drive;
  for (int k = 0;; ++k) {
    const double s = k * ds_m;
    if (s >= sc.route_length_m() - 1e-6) break;
    grid.nodes.push_back(s);
  }
  grid.nodes.push_back(sc.route_length_m());
  for (double s : grid.nodes) {
    grid.v_mps.push_back(cycle_speed_at(sc.cycle, s));
    grid.p_prop_w.push_back(cycle_prop_at(sc.cycle, s));
  }
  ocp::Trajectory traj;
  traj.zeta = {};
  traj.phases.push_back(rollout_drive(sc, grid, u));
  return traj;
}

}  // namespace

TEST_CASE("plant: equilibrium stays put") {
  Scenario sc = parked_scenario(20.0, 20.0);
  sc.soc0 = 0.5;
  const auto traj = parked_trajectory(20, 1000.0, Control{});
  const auto trace = plant::simulate(sc, traj, 10);
  CHECK(trace.final_state.soc == Approx(0.5).margin(1e-15));
  CHECK(trace.final_state.tb_c == Approx(20.0).margin(1e-12));
}

TEST_CASE("plant: parked cooling follows the exponential oracle") {
  Scenario sc = parked_scenario(-10.0, 20.0);
  sc.actuators.exch_coeff_base_w_per_k = 40.0;
  sc.soc0 = 0.5;
  // gamma0*t/C = 40*3750/375000 = 0.4; Tb - Tamb = 30*exp(-0.4) = 20.1096 K.
  const auto traj = parked_trajectory(20, 3750.0, Control{});
  const auto trace = plant::simulate(sc, traj, 10);
  const double expected = -10.0 + 30.0 * std::exp(-0.4);
  CHECK(trace.final_state.tb_c == Approx(expected).margin(1e-3));
}

TEST_CASE("plant: constant-current charge matches the soc arithmetic oracle") {
  Scenario sc = parked_scenario(20.0, 20.0);
  sc.battery.ocv_v_by_soc = Curve1D{{0.0, 360.0}, {1.0, 360.0}};
  sc.soc0 = 0.3;
  Control u{};
  u.p_b_w = -100000.0;
  u.p_grid_w = 100000.0;
  // dsoc = 100000*600/(702000*360) = 0.2374169...
  const auto traj = parked_trajectory(20, 600.0, u);
  const auto trace = plant::simulate(sc, traj, 10);
  CHECK(trace.final_state.soc == Approx(0.3 + 0.23741690141146).margin(1e-9));
}

TEST_CASE("plant: compare returns zeros for an exactly reproduced trajectory") {
  Scenario sc = parked_scenario(20.0, 20.0);
  sc.soc0 = 0.5;
  auto traj = parked_trajectory(20, 1000.0, Control{});
  for (auto& s : traj.phases[0].soc) s = 0.5;
  for (auto& t : traj.phases[0].tb_c) t = 20.0;
  const auto trace = plant::simulate(sc, traj, 10);
  const auto dev = plant::compare(trace, traj);
  CHECK(dev.max_dsoc == Approx(0.0).margin(1e-15));
  CHECK(dev.max_dtb_c == Approx(0.0).margin(1e-12));
}

TEST_CASE("plant: coarser transcription grids deviate more") {
  Scenario sc = toy_scenario({16000.0}, -10.0);
  sc.cycle.clear();
  // 15 km / 13 km oscillations: resolved at 4 km steps, aliased at 20 km.
  for (int k = 0; k <= 80; ++k) {
    const double s = k * 500.0;
    sc.cycle.push_back({s, 20.0 + 6.0 * std::sin(2.0 * M_PI * s / 15000.0),
                        30000.0 + 20000.0 * std::sin(2.0 * M_PI * s / 13000.0)});
  }
  Control u{1500.0, 0.0, 500.0, 0.0, 40000.0};
  const auto fine = drive_only_trajectory(sc, 4000.0, u);
  const auto coarse = drive_only_trajectory(sc, 20000.0, u);
  const auto dev_fine = plant::compare(plant::simulate(sc, fine, 10), fine);
  const auto dev_coarse = plant::compare(plant::simulate(sc, coarse, 10), coarse);
  CHECK(dev_coarse.max_dsoc > dev_fine.max_dsoc);
  CHECK(dev_coarse.max_dtb_c > dev_fine.max_dtb_c);
  CHECK(dev_fine.max_dsoc < 1e-3);
  CHECK(dev_fine.max_dtb_c < 0.1);
}

TEST_CASE("plant: halving the substep changes outputs far less than the ocp gap") {
  Scenario sc = toy_scenario({16000.0}, -10.0);
  sc.cycle.clear();
  for (int k = 0; k <= 80; ++k) {
    const double s = k * 500.0;
    sc.cycle.push_back({s, 20.0 + 6.0 * std::sin(2.0 * M_PI * s / 15000.0),
                        30000.0 + 20000.0 * std::sin(2.0 * M_PI * s / 13000.0)});
  }
  Control u{1500.0, 0.0, 500.0, 0.0, 40000.0};
  const auto traj = drive_only_trajectory(sc, 20000.0, u);
  const auto t10 = plant::simulate(sc, traj, 10);
  const auto t20 = plant::simulate(sc, traj, 20);
  const auto gap = plant::compare(t10, traj);
  const double refine_soc = std::abs(t20.final_state.soc - t10.final_state.soc);
  const double refine_tb = std::abs(t20.final_state.tb_c - t10.final_state.tb_c);
  CHECK(refine_soc <= std::max(0.1 * gap.max_dsoc, 1e-12));
  CHECK(refine_tb <= std::max(0.1 * gap.max_dtb_c, 1e-10));
}

TEST_CASE("plant: energy bookkeeping closes on a balanced trajectory") {
  // Power-balanced controls: p_b solves the balance at each node, so grid
  // energy minus every consumption term must equal the battery energy change.
  Scenario sc = toy_scenario({16000.0}, -10.0);
  sc.tb0_c = -10.0;
  const std::vector<std::uint8_t> zeta = {1};
  const auto t = ocp::build(sc, zeta, bevopt::testing::toy_grid());
  std::vector<double> z = plan::detail::heuristic_start(t);
  // Tighten the heuristic's p_b to an exact balance fix-point per node.
  const auto problem = t.as_nlp();
  auto traj = t.unpack(z);
  for (std::size_t p = 0; p < traj.phases.size(); ++p) {
    auto& ph = traj.phases[p];
    for (std::size_t k = 0; k < ph.node.size(); ++k) {
      const double prop = ph.kind == ocp::PhaseKind::drive ? ph.p_prop_w[k] : 0.0;
      const double grid = ph.p_grid_w[k];
      double pb = 0.0;
      for (int it = 0; it < 60; ++it) {
        const double resid = power_balance_residual(
            sc.battery, sc.actuators, sc.cabin, ph.soc[k], ph.tb_c[k], ph.p_hvch_b_w[k],
            ph.p_hvac_b_w[k], ph.p_hp_w[k], grid, pb, prop, sc.t_amb_c);
        pb -= resid;  // residual = grid + pb - consumers
        if (std::abs(resid) < 1e-10) break;
      }
      ph.p_b_w[k] = pb;
    }
  }
  const auto trace = plant::simulate(sc, traj, 10);
  double grid_wh = 0.0, consumption_wh = 0.0;
  for (const auto& ph : trace.phases) {
    for (std::size_t k = 0; k + 1 < ph.pos.size(); ++k) {
      const double dt = ph.time_s[k + 1] - ph.time_s[k];
      auto trap = [&](const std::vector<double>& ys) {
        return 0.5 * (ys[k] + ys[k + 1]) * dt / 3600.0;
      };
      grid_wh += trap(ph.p_grid_w);
      const double joule_a = ph.q_pass_w[k] - sc.actuators.ed_loss_fraction *
                                                  max0(ph.kind == ocp::PhaseKind::drive
                                                           ? cycle_prop_at(sc.cycle, ph.pos[k])
                                                           : 0.0);
      const double joule_b =
          ph.q_pass_w[k + 1] -
          sc.actuators.ed_loss_fraction * max0(ph.kind == ocp::PhaseKind::drive
                                                   ? cycle_prop_at(sc.cycle, ph.pos[k + 1])
                                                   : 0.0);
      consumption_wh += 0.5 * (joule_a + joule_b) * dt / 3600.0;
      auto prop_at = [&](std::size_t i) {
        return ph.kind == ocp::PhaseKind::drive ? cycle_prop_at(sc.cycle, ph.pos[i]) : 0.0;
      };
      consumption_wh += 0.5 * (prop_at(k) + prop_at(k + 1)) * dt / 3600.0;
      consumption_wh += trap(ph.p_hvch_b_w) + trap(ph.p_hvac_b_w) + trap(ph.p_hp_w) +
                        trap(ph.hvch_cabin_w);
      consumption_wh += sc.cabin.aux_power_w * dt / 3600.0;
    }
  }
  // Detour legs drain a known extra energy outside the phase integrals.
  double detour_wh = 0.0;
  for (std::size_t i = 0; i < sc.sites.size(); ++i)
    if (traj.zeta[i]) detour_wh += sc.sites[i].detour_energy_wh;
  const double delta_e_wh =
      plan::detail::battery_energy_wh(sc.battery, trace.final_state.soc, sc.soc0);
  const double lhs = grid_wh - consumption_wh - detour_wh;
  const double scale = std::max(std::abs(grid_wh) + consumption_wh, 1.0);
  CHECK(std::abs(lhs - delta_e_wh) / scale < 0.005);
}
