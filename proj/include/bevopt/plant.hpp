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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "bevopt/model.hpp"
#include "bevopt/ocp.hpp"
#include "bevopt/route.hpp"

namespace bevopt::plant {

struct PhaseTrace {
  ocp::PhaseKind kind = ocp::PhaseKind::drive;
  int site_index = -1;
  std::vector<double> pos;     // s_m while driving, tau while charging
  std::vector<double> time_s;  // physical time since trip start
  std::vector<double> soc, tb_c;
  std::vector<double> p_b_w, p_grid_w, p_hvch_b_w, p_hvac_b_w, p_hp_w;
  std::vector<double> hvch_cabin_w, q_pass_w, q_act_w, q_exh_w, cop_v;
};

struct Trace {
  std::vector<PhaseTrace> phases;
  State final_state;
};

struct Deviation {
  double max_dsoc = 0.0;
  double max_dtb_c = 0.0;
};

namespace detail {

inline double lerp(const std::vector<double>& ys, int k, double t) {
  return ys[static_cast<std::size_t>(k)] +
         t * (ys[static_cast<std::size_t>(k) + 1] - ys[static_cast<std::size_t>(k)]);
}

}  // namespace detail

// Replays a control schedule through the continuous dynamics with RK4 at
// substep resolution. The integration loop is independent of the
// transcription's, so agreement is a genuine cross-check.
inline Trace simulate(const Scenario& scenario, const ocp::Trajectory& traj, int substeps = 10) {
  if (substeps < 1) throw std::invalid_argument("plant: substeps must be >= 1");
  const auto& bat = scenario.battery;
  const auto& act = scenario.actuators;
  const auto& cab = scenario.cabin;

  Trace trace;
  double soc = scenario.soc0;
  double tb = scenario.tb0_c;
  double clock = 0.0;

  auto record = [&](PhaseTrace& pt, double pos, double v, double prop, double hvch, double hvac,
                    double hp, double grid, double pb) {
    pt.pos.push_back(pos);
    pt.time_s.push_back(clock);
    pt.soc.push_back(soc);
    pt.tb_c.push_back(tb);
    pt.p_b_w.push_back(pb);
    pt.p_grid_w.push_back(grid);
    pt.p_hvch_b_w.push_back(hvch);
    pt.p_hvac_b_w.push_back(hvac);
    pt.p_hp_w.push_back(hp);
    pt.hvch_cabin_w.push_back(hvch_cabin_power(act, cab, scenario.t_amb_c, tb, hp));
    pt.q_pass_w.push_back(q_passive(bat, act, soc, tb, pb, prop));
    pt.q_act_w.push_back(q_active(act, hvch, hvac, hp, tb));
    pt.q_exh_w.push_back(q_exchange(act, scenario.t_amb_c, tb, v));
    pt.cop_v.push_back(act.cop_by_temp_c(tb));
  };

  for (std::size_t p = 0; p < traj.phases.size(); ++p) {
    const ocp::PhaseTrajectory& ph = traj.phases[p];
    const int n = static_cast<int>(ph.node.size());
    PhaseTrace pt;
    pt.kind = ph.kind;
    pt.site_index = ph.site_index;

    if (ph.kind == ocp::PhaseKind::charge) {
      const ChargerSite& site = scenario.sites[static_cast<std::size_t>(ph.site_index)];
      // Arrival detour leg.
      const auto d_in = detour_leg_offset<double>(bat, act, soc, tb, scenario.t_amb_c,
                                                  site.detour_time_s, site.detour_energy_wh);
      soc -= d_in.dsoc;
      tb -= d_in.dtb;
      clock += 0.5 * site.detour_time_s;

      const double t_chg = ph.t_chg_s;
      record(pt, ph.node[0], 0.0, 0.0, ph.p_hvch_b_w[0], ph.p_hvac_b_w[0], ph.p_hp_w[0],
             ph.p_grid_w[0], ph.p_b_w[0]);
      for (int k = 0; k + 1 < n; ++k) {
        const double tau0 = ph.node[static_cast<std::size_t>(k)];
        const double dtau = ph.node[static_cast<std::size_t>(k) + 1] - tau0;
        for (int s = 0; s < substeps; ++s) {
          const double a = static_cast<double>(s) / substeps;
          const double b = static_cast<double>(s + 1) / substeps;
          const double dt = t_chg * dtau * (b - a);
          auto u_at = [&](double frac) {
            const double t = a + frac * (b - a);
            return Control{detail::lerp(ph.p_hvch_b_w, k, t), detail::lerp(ph.p_hvac_b_w, k, t),
                           detail::lerp(ph.p_hp_w, k, t), detail::lerp(ph.p_grid_w, k, t),
                           detail::lerp(ph.p_b_w, k, t)};
          };
          auto f = [&](double s_soc, double s_tb, const Control& u) {
            return state_rate_per_second(bat, act, s_soc, s_tb, u.p_hvch_b_w, u.p_hvac_b_w,
                                         u.p_hp_w, u.p_b_w, 0.0, 0.0, scenario.t_amb_c);
          };
          const Control u0 = u_at(0.0), um = u_at(0.5), u1 = u_at(1.0);
          const auto k1 = f(soc, tb, u0);
          const auto k2 = f(soc + 0.5 * dt * k1.dsoc, tb + 0.5 * dt * k1.dtb, um);
          const auto k3 = f(soc + 0.5 * dt * k2.dsoc, tb + 0.5 * dt * k2.dtb, um);
          const auto k4 = f(soc + dt * k3.dsoc, tb + dt * k3.dtb, u1);
          soc += dt / 6.0 * (k1.dsoc + 2.0 * k2.dsoc + 2.0 * k3.dsoc + k4.dsoc);
          tb += dt / 6.0 * (k1.dtb + 2.0 * k2.dtb + 2.0 * k3.dtb + k4.dtb);
          clock += dt;
          const double tau = tau0 + b * dtau;
          const Control ue = u_at(1.0);
          record(pt, tau, 0.0, 0.0, ue.p_hvch_b_w, ue.p_hvac_b_w, ue.p_hp_w, ue.p_grid_w,
                 ue.p_b_w);
        }
      }
      // Departure detour leg.
      const auto d_out = detour_leg_offset<double>(bat, act, soc, tb, scenario.t_amb_c,
                                                   site.detour_time_s, site.detour_energy_wh);
      soc -= d_out.dsoc;
      tb -= d_out.dtb;
      clock += 0.5 * site.detour_time_s;
    } else {
      record(pt, ph.node[0], ph.v_mps[0], ph.p_prop_w[0], ph.p_hvch_b_w[0], ph.p_hvac_b_w[0],
             ph.p_hp_w[0], ph.p_grid_w[0], ph.p_b_w[0]);
      for (int k = 0; k + 1 < n; ++k) {
        const double s0 = ph.node[static_cast<std::size_t>(k)];
        const double s1 = ph.node[static_cast<std::size_t>(k) + 1];
        const double h = (s1 - s0) / substeps;
        for (int s = 0; s < substeps; ++s) {
          const double a = static_cast<double>(s) / substeps;
          const double b = static_cast<double>(s + 1) / substeps;
          auto env_at = [&](double t) {
            return std::pair<double, double>{detail::lerp(ph.v_mps, k, t),
                                             detail::lerp(ph.p_prop_w, k, t)};
          };
          auto u_at = [&](double t) {
            return Control{detail::lerp(ph.p_hvch_b_w, k, t), detail::lerp(ph.p_hvac_b_w, k, t),
                           detail::lerp(ph.p_hp_w, k, t), detail::lerp(ph.p_grid_w, k, t),
                           detail::lerp(ph.p_b_w, k, t)};
          };
          auto f = [&](double s_soc, double s_tb, double t) {
            const auto [v, prop] = env_at(t);
            const Control u = u_at(t);
            auto r = state_rate_per_second(bat, act, s_soc, s_tb, u.p_hvch_b_w, u.p_hvac_b_w,
                                           u.p_hp_w, u.p_b_w, v, prop, scenario.t_amb_c);
            r.dsoc /= v;
            r.dtb /= v;
            return r;
          };
          const double t0 = a, tm = 0.5 * (a + b), t1 = b;
          const auto k1 = f(soc, tb, t0);
          const auto k2 = f(soc + 0.5 * h * k1.dsoc, tb + 0.5 * h * k1.dtb, tm);
          const auto k3 = f(soc + 0.5 * h * k2.dsoc, tb + 0.5 * h * k2.dtb, tm);
          const auto k4 = f(soc + h * k3.dsoc, tb + h * k3.dtb, t1);
          soc += h / 6.0 * (k1.dsoc + 2.0 * k2.dsoc + 2.0 * k3.dsoc + k4.dsoc);
          tb += h / 6.0 * (k1.dtb + 2.0 * k2.dtb + 2.0 * k3.dtb + k4.dtb);
          const auto [va, pa] = env_at(a);
          const auto [vb, pb2] = env_at(b);
          clock += 0.5 * (1.0 / va + 1.0 / vb) * (s1 - s0) / substeps;
          const Control ue = u_at(b);
          record(pt, s0 + b * (s1 - s0), vb, pb2, ue.p_hvch_b_w, ue.p_hvac_b_w, ue.p_hp_w,
                 ue.p_grid_w, ue.p_b_w);
        }
      }
    }
    trace.phases.push_back(std::move(pt));
  }
  trace.final_state = {soc, tb};
  return trace;
}

// Max per-state deviation at the grid nodes shared by a trace and the
// trajectory it replayed.
inline Deviation compare(const Trace& trace, const ocp::Trajectory& traj) {
  if (trace.phases.size() != traj.phases.size())
    throw std::invalid_argument("plant::compare: phase count mismatch");
  Deviation dev;
  for (std::size_t p = 0; p < trace.phases.size(); ++p) {
    const PhaseTrace& a = trace.phases[p];
    const ocp::PhaseTrajectory& b = traj.phases[p];
    const int n = static_cast<int>(b.node.size());
    if (a.pos.size() < b.node.size() || (a.pos.size() - 1) % (b.node.size() - 1) != 0)
      throw std::invalid_argument("plant::compare: node grids do not align");
    const std::size_t stride = (a.pos.size() - 1) / (b.node.size() - 1);
    for (int k = 0; k < n; ++k) {
      const std::size_t i = static_cast<std::size_t>(k) * stride;
      dev.max_dsoc = std::max(dev.max_dsoc, std::abs(a.soc[i] - b.soc[static_cast<std::size_t>(k)]));
      dev.max_dtb_c =
          std::max(dev.max_dtb_c, std::abs(a.tb_c[i] - b.tb_c[static_cast<std::size_t>(k)]));
    }
  }
  return dev;
}

}  // namespace bevopt::plant
