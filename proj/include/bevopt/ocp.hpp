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

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "bevopt/dual.hpp"
#include "bevopt/dual2.hpp"
#include "bevopt/model.hpp"
#include "bevopt/nlp.hpp"
#include "bevopt/route.hpp"

namespace bevopt::ocp {

struct GridOptions {
  double ds_m = 4000.0;        // driving distance step
  int tau_steps = 20;          // intervals per charging phase
  double hvch_smooth_w = 5.0;  // softplus width for the cabin-HVCH term, watts
  double v_detour_mps = 8.33;  // assumed speed on the detour legs
  // C1 corner rounding of curve/table knots inside the NLP evaluators, as a
  // fraction of the smallest knot gap. Keeps evaluators continuously
  // differentiable; reporting paths use the exact piecewise-linear model.
  double kink_smoothing = 0.08;
};

enum class PhaseKind { drive, charge };

// One transcription phase: distance nodes with exogenous speed/propulsion for
// driving, uniform tau in [0,1] for charging.
struct PhaseGrid {
  PhaseKind kind = PhaseKind::drive;
  int site_index = -1;
  std::vector<double> nodes;
  std::vector<double> v_mps, p_prop_w;  // driving only
};

struct CostBreakdown {
  double energy = 0.0;
  double time = 0.0;
  double occupancy = 0.0;
  double detour = 0.0;
  double total() const { return energy + time + occupancy + detour; }
};

struct PhaseTrajectory {
  PhaseKind kind = PhaseKind::drive;
  int site_index = -1;
  double t_chg_s = 0.0;
  std::vector<double> node;
  std::vector<double> v_mps, p_prop_w;
  std::vector<double> soc, tb_c;
  std::vector<double> p_b_w, p_grid_w, p_hvch_b_w, p_hvac_b_w, p_hp_w;
  std::vector<double> hvch_cabin_w, q_pass_w, q_act_w, q_exh_w, cop;
};

struct Trajectory {
  std::vector<PhaseTrajectory> phases;
  std::vector<std::uint8_t> zeta;
  std::vector<double> t_chg_s;  // per site; 0 when skipped
  CostBreakdown cost;
  double charged_energy_kwh = 0.0;
  double combined_time_s = 0.0;
};

namespace detail {

// Variables per node: soc, tb, p_hvch_b, p_hvac_b, p_hp, p_grid, p_b.
inline constexpr int kVarsPerNode = 7;
inline constexpr int kSoc = 0, kTb = 1, kHvch = 2, kHvac = 3, kHp = 4, kGrid = 5, kPb = 6;

template <class T>
struct NodeVars {
  T soc, tb, hvch, hvac, hp, grid, pb;
};

}  // namespace detail

// Dense finite-dimensional program for one fixed charger combination.
// Variables are internally scaled to O(1); pack/unpack translate to physical
// units. Immutable after build; all evaluators are const and reentrant.
class TranscribedNLP {
 public:
  TranscribedNLP(Scenario scenario, std::vector<std::uint8_t> zeta, GridOptions opts)
      : scenario_(std::move(scenario)), zeta_(std::move(zeta)), opts_(opts) {
    if (zeta_.size() != scenario_.sites.size())
      throw std::invalid_argument("transcribe: zeta length must match site count");
    battery_s_ = scenario_.battery;
    actuators_s_ = scenario_.actuators;
    if (opts_.kink_smoothing > 0.0) {
      const double f = opts_.kink_smoothing;
      battery_s_.ocv_v_by_soc = battery_s_.ocv_v_by_soc.with_smoothing(f);
      battery_s_.resistance_ohm_by_temp_c = battery_s_.resistance_ohm_by_temp_c.with_smoothing(f);
      battery_s_.dchg_limit_w = battery_s_.dchg_limit_w.with_smoothing(f);
      battery_s_.chg_limit_w = battery_s_.chg_limit_w.with_smoothing(f);
      actuators_s_.cop_by_temp_c = actuators_s_.cop_by_temp_c.with_smoothing(f);
    }
    build_grids();
    build_layout();
    build_bounds();
    count_rows();
  }

  const Scenario& scenario() const { return scenario_; }
  const std::vector<std::uint8_t>& zeta() const { return zeta_; }
  const GridOptions& options() const { return opts_; }
  const std::vector<PhaseGrid>& grids() const { return grids_; }
  int n_vars() const { return n_vars_; }
  int n_eq() const { return n_eq_; }
  int n_ineq() const { return n_ineq_; }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }
  int n_active_sites() const {
    int n = 0;
    for (auto z : zeta_) n += z ? 1 : 0;
    return n;
  }

  // Midpoint-of-bounds starting vector (plan installs smarter warm starts).
  std::vector<double> z_mid() const {
    std::vector<double> z(static_cast<std::size_t>(n_vars_));
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = 0.5 * (lower_[i] + upper_[i]);
    return z;
  }

  // ---- scaled variable indexing -------------------------------------------
  int var(int phase, int node, int comp) const {
    return phase_first_[static_cast<std::size_t>(phase)] + node * detail::kVarsPerNode + comp;
  }
  int tchg_var(int phase) const { return tchg_var_[static_cast<std::size_t>(phase)]; }
  double comp_scale(int comp) const { return comp_scale_[static_cast<std::size_t>(comp)]; }
  double tchg_scale() const { return tchg_scale_; }

  double objective(std::span<const double> z) const {
    double j = 0.0;
    for (std::size_t p = 0; p < grids_.size(); ++p) {
      if (grids_[p].kind != PhaseKind::charge) continue;
      const ChargerSite& site = scenario_.sites[static_cast<std::size_t>(grids_[p].site_index)];
      const double t_chg = z[static_cast<std::size_t>(tchg_var(static_cast<int>(p)))] * tchg_scale_;
      const double e_kwh = t_chg * grid_power_integral(z, static_cast<int>(p)) / 3.6e6;
      j += site.energy_price_per_kwh * e_kwh;
      j += scenario_.time_price_per_h * (t_chg + site.detour_time_s) / 3600.0;
      j += site.occupancy_price_per_min * softplus_pos(t_chg - site.occupancy_free_s, 1.0) / 60.0;
      j += scenario_.detour_penalty;
    }
    return j;
  }

  void objective_gradient(std::span<const double> z, std::span<double> out) const {
    for (double& v : out) v = 0.0;
    for (std::size_t p = 0; p < grids_.size(); ++p) {
      if (grids_[p].kind != PhaseKind::charge) continue;
      const ChargerSite& site = scenario_.sites[static_cast<std::size_t>(grids_[p].site_index)];
      const int n = static_cast<int>(grids_[p].nodes.size());
      const double dtau = 1.0 / static_cast<double>(n - 1);
      const double t_chg = z[static_cast<std::size_t>(tchg_var(static_cast<int>(p)))] * tchg_scale_;
      const double integral = grid_power_integral(z, static_cast<int>(p));
      for (int k = 0; k < n; ++k) {
        const double w = (k == 0 || k == n - 1) ? 0.5 * dtau : dtau;
        out[static_cast<std::size_t>(var(static_cast<int>(p), k, detail::kGrid))] +=
            site.energy_price_per_kwh * t_chg * w / 3.6e6 * comp_scale_[detail::kGrid];
      }
      const double x = t_chg - site.occupancy_free_s;
      const double sig = x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      out[static_cast<std::size_t>(tchg_var(static_cast<int>(p)))] +=
          (site.energy_price_per_kwh * integral / 3.6e6 + scenario_.time_price_per_h / 3600.0 +
           site.occupancy_price_per_min * sig / 60.0) *
          tchg_scale_;
    }
  }

  // Exact second derivatives of the objective: the energy term is bilinear in
  // (t_chg, p_grid) and the occupancy softplus curves t_chg.
  void objective_hessian(std::span<const double> z, std::vector<nlp::Triplet>& out) const {
    for (std::size_t p = 0; p < grids_.size(); ++p) {
      if (grids_[p].kind != PhaseKind::charge) continue;
      const ChargerSite& site = scenario_.sites[static_cast<std::size_t>(grids_[p].site_index)];
      const int n = static_cast<int>(grids_[p].nodes.size());
      const double dtau = 1.0 / static_cast<double>(n - 1);
      const int it = tchg_var(static_cast<int>(p));
      for (int k = 0; k < n; ++k) {
        const double w = (k == 0 || k == n - 1) ? 0.5 * dtau : dtau;
        out.push_back({it, var(static_cast<int>(p), k, detail::kGrid),
                       site.energy_price_per_kwh * w / 3.6e6 * tchg_scale_ *
                           comp_scale_[detail::kGrid]});
      }
      if (site.occupancy_price_per_min > 0.0) {
        const double t_chg = z[static_cast<std::size_t>(it)] * tchg_scale_;
        const double x = t_chg - site.occupancy_free_s;
        const double sig = x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        out.push_back(
            {it, it, site.occupancy_price_per_min / 60.0 * sig * (1.0 - sig) * tchg_scale_ *
                         tchg_scale_});
      }
    }
  }

  // Exact multiplier-weighted constraint curvature, row groups traversed in
  // the same order as the residual evaluators. One triplet per unordered
  // variable pair.
  void constraint_hessian(std::span<const double> z, std::span<const double> w_eq,
                          std::span<const double> w_ineq, std::vector<nlp::Triplet>& out) const {
    int row = 0;
    {  // dynamics defects
      using D = Dual2<13>;
      const int comps[6] = {detail::kSoc, detail::kTb, detail::kHvch,
                            detail::kHvac, detail::kHp, detail::kPb};
      for (std::size_t p = 0; p < grids_.size(); ++p) {
        const bool charge = grids_[p].kind == PhaseKind::charge;
        const int intervals = static_cast<int>(grids_[p].nodes.size()) - 1;
        for (int k = 0; k < intervals; ++k, row += 2) {
          int cols[13];
          double scales[13];
          D seed[13];
          int slot = 0;
          for (int node = k; node <= k + 1; ++node)
            for (int c = 0; c < 6; ++c) {
              const int vi = var(static_cast<int>(p), node, comps[c]);
              cols[slot] = vi;
              scales[slot] = comp_scale_[static_cast<std::size_t>(comps[c])];
              seed[slot] = D::seeded(z[static_cast<std::size_t>(vi)] * scales[slot], slot);
              ++slot;
            }
          D t_chg(0.0);
          int n_slots = slot;
          if (charge) {
            const int vi = tchg_var(static_cast<int>(p));
            cols[slot] = vi;
            scales[slot] = tchg_scale_;
            t_chg = D::seeded(z[static_cast<std::size_t>(vi)] * tchg_scale_, slot);
            n_slots = ++slot;
          }
          D r[2];
          defect_kernel<D>(static_cast<int>(p), k, seed[0], seed[1],
                           {seed[2], seed[3], seed[4], seed[5]}, seed[6], seed[7],
                           {seed[8], seed[9], seed[10], seed[11]}, t_chg, r);
          const double w0 = w_eq[static_cast<std::size_t>(row)];
          const double w1 = w_eq[static_cast<std::size_t>(row) + 1];
          if (w0 == 0.0 && w1 == 0.0) continue;
          for (int a = 0; a < n_slots; ++a)
            for (int b = a; b < n_slots; ++b) {
              const double v =
                  (w0 * r[0].h[static_cast<std::size_t>(D::tri(a, b))] +
                   w1 * r[1].h[static_cast<std::size_t>(D::tri(a, b))]) *
                  scales[a] * scales[b];
              if (v != 0.0) out.push_back({cols[a], cols[b], v});
            }
        }
      }
    }
    {  // power balances
      using D = Dual2<7>;
      for (std::size_t p = 0; p < grids_.size(); ++p) {
        const PhaseGrid& g = grids_[p];
        for (int k = 0; k < static_cast<int>(g.nodes.size()); ++k, ++row) {
          const double w = w_eq[static_cast<std::size_t>(row)];
          if (w == 0.0) continue;
          const double prop =
              g.kind == PhaseKind::drive ? g.p_prop_w[static_cast<std::size_t>(k)] : 0.0;
          int cols[7];
          double scales[7];
          D seed[7];
          for (int c = 0; c < detail::kVarsPerNode; ++c) {
            const int vi = var(static_cast<int>(p), k, c);
            cols[c] = vi;
            scales[c] = comp_scale_[static_cast<std::size_t>(c)];
            seed[c] = D::seeded(z[static_cast<std::size_t>(vi)] * scales[c], c);
          }
          const D r = power_balance_residual(battery_s_, actuators_s_, scenario_.cabin,
                                             seed[detail::kSoc], seed[detail::kTb],
                                             seed[detail::kHvch], seed[detail::kHvac],
                                             seed[detail::kHp], seed[detail::kGrid],
                                             seed[detail::kPb], prop, scenario_.t_amb_c,
                                             opts_.hvch_smooth_w) /
                        comp_scale_[detail::kPb];
          for (int a = 0; a < 7; ++a)
            for (int b = a; b < 7; ++b) {
              const double v =
                  w * r.h[static_cast<std::size_t>(D::tri(a, b))] * scales[a] * scales[b];
              if (v != 0.0) out.push_back({cols[a], cols[b], v});
            }
        }
      }
    }
    {  // transitions (links are linear; only the detour terms curve)
      using D = Dual2<2>;
      for (std::size_t site = 0; site < scenario_.sites.size(); ++site) {
        if (!zeta_[site]) {
          row += 2;
          continue;
        }
        const ChargerSite& s = scenario_.sites[site];
        const int leg_before = drive_phase_of_leg_[site];
        const int cp = charge_phase_of_site_[site];
        const int last =
            static_cast<int>(grids_[static_cast<std::size_t>(leg_before)].nodes.size()) - 1;
        const int clast = static_cast<int>(grids_[static_cast<std::size_t>(cp)].nodes.size()) - 1;
        // Rows r, r+1: to - (from - delta(from)); curvature only via delta(from).
        auto emit_jump_h = [&](int from_phase, int from_node, int row0) {
          const int i_fs = var(from_phase, from_node, detail::kSoc);
          const int i_ft = var(from_phase, from_node, detail::kTb);
          const D fs = D::seeded(z[static_cast<std::size_t>(i_fs)] * comp_scale_[detail::kSoc], 0);
          const D ft = D::seeded(z[static_cast<std::size_t>(i_ft)] * comp_scale_[detail::kTb], 1);
          const auto d = detour_leg_offset<D>(battery_s_, actuators_s_, fs, ft, scenario_.t_amb_c,
                                              s.detour_time_s, s.detour_energy_wh,
                                              opts_.v_detour_mps);
          const D rows[2] = {d.dsoc / comp_scale_[detail::kSoc],
                             d.dtb / comp_scale_[detail::kTb]};
          const int cols[2] = {i_fs, i_ft};
          const double scl[2] = {comp_scale_[detail::kSoc], comp_scale_[detail::kTb]};
          for (int r = 0; r < 2; ++r) {
            const double w = w_eq[static_cast<std::size_t>(row0) + static_cast<std::size_t>(r)];
            if (w == 0.0) continue;
            for (int a = 0; a < 2; ++a)
              for (int b = a; b < 2; ++b) {
                const double v =
                    w * rows[r].h[static_cast<std::size_t>(D::tri(a, b))] * scl[a] * scl[b];
                if (v != 0.0) out.push_back({cols[a], cols[b], v});
              }
          }
        };
        emit_jump_h(leg_before, last, row);
        emit_jump_h(cp, clast, row + 2);
        row += 4;
      }
    }
    {  // inequalities
      using D = Dual2<3>;
      int grow = 0;
      for (std::size_t p = 0; p < grids_.size(); ++p) {
        const bool drive = grids_[p].kind == PhaseKind::drive;
        for (int k = 0; k < static_cast<int>(grids_[p].nodes.size()); ++k) {
          const int i_soc = var(static_cast<int>(p), k, detail::kSoc);
          const int i_tb = var(static_cast<int>(p), k, detail::kTb);
          const int i_hp = var(static_cast<int>(p), k, detail::kHp);
          auto emit_pair = [&](const D& r, double w, const int cols[3], const double scl[3]) {
            if (w == 0.0) return;
            for (int a = 0; a < 3; ++a)
              for (int b = a; b < 3; ++b) {
                const double v =
                    w * r.h[static_cast<std::size_t>(D::tri(a, b))] * scl[a] * scl[b];
                if (v != 0.0) out.push_back({cols[a], cols[b], v});
              }
          };
          const D soc = D::seeded(z[static_cast<std::size_t>(i_soc)] * comp_scale_[detail::kSoc], 0);
          const D tb = D::seeded(z[static_cast<std::size_t>(i_tb)] * comp_scale_[detail::kTb], 1);
          const int cols_st[3] = {i_soc, i_tb, i_tb};  // pb enters linearly
          const double scl_st[3] = {comp_scale_[detail::kSoc], comp_scale_[detail::kTb], 1.0};
          if (drive) {
            const D r = (0.0 - battery_s_.dchg_limit_w(soc, tb)) / comp_scale_[detail::kPb];
            emit_pair(r, w_ineq[static_cast<std::size_t>(grow)], cols_st, scl_st);
            ++grow;
          }
          {
            const D r = battery_s_.chg_limit_w(soc, tb) / comp_scale_[detail::kPb];
            emit_pair(r, w_ineq[static_cast<std::size_t>(grow)], cols_st, scl_st);
            ++grow;
          }
          {
            const D tb2 = D::seeded(z[static_cast<std::size_t>(i_tb)] * comp_scale_[detail::kTb], 0);
            const D hp = D::seeded(z[static_cast<std::size_t>(i_hp)] * comp_scale_[detail::kHp], 1);
            const D r = hvch_cabin_power(actuators_s_, scenario_.cabin, scenario_.t_amb_c, tb2, hp,
                                         opts_.hvch_smooth_w) /
                        comp_scale_[detail::kHvch];
            const int cols_h[3] = {i_tb, i_hp, i_hp};
            const double scl_h[3] = {comp_scale_[detail::kTb], comp_scale_[detail::kHp], 1.0};
            emit_pair(r, w_ineq[static_cast<std::size_t>(grow)], cols_h, scl_h);
            ++grow;
          }
        }
      }
    }
  }

  void equalities(std::span<const double> z, std::span<double> out) const {
    int row = 0;
    for (std::size_t p = 0; p < grids_.size(); ++p) {
      const int intervals = static_cast<int>(grids_[p].nodes.size()) - 1;
      for (int k = 0; k < intervals; ++k) {
        double r[2];
        defect_values(z, static_cast<int>(p), k, r);
        out[static_cast<std::size_t>(row++)] = r[0];
        out[static_cast<std::size_t>(row++)] = r[1];
      }
    }
    for (std::size_t p = 0; p < grids_.size(); ++p)
      for (int k = 0; k < static_cast<int>(grids_[p].nodes.size()); ++k)
        out[static_cast<std::size_t>(row++)] = balance_value(z, static_cast<int>(p), k);
    for (std::size_t i = 0; i < scenario_.sites.size(); ++i) {
      double r[4];
      const int n = transition_values(z, static_cast<int>(i), r);
      for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(row++)] = r[k];
    }
  }

  void inequalities(std::span<const double> z, std::span<double> out) const {
    int row = 0;
    for (std::size_t p = 0; p < grids_.size(); ++p) {
      const bool drive = grids_[p].kind == PhaseKind::drive;
      for (int k = 0; k < static_cast<int>(grids_[p].nodes.size()); ++k) {
        const auto nv = node_values<double>(z, static_cast<int>(p), k);
        if (drive)
          out[static_cast<std::size_t>(row++)] =
              (nv.pb - battery_s_.dchg_limit_w(nv.soc, nv.tb)) / comp_scale_[detail::kPb];
        out[static_cast<std::size_t>(row++)] =
            (battery_s_.chg_limit_w(nv.soc, nv.tb) - nv.pb) / comp_scale_[detail::kPb];
        out[static_cast<std::size_t>(row++)] = hvch_capacity_value(nv);
      }
    }
  }

  void equality_jacobian(std::span<const double> z, std::vector<nlp::Triplet>& out) const {
    int row = 0;
    for (std::size_t p = 0; p < grids_.size(); ++p) {
      const int intervals = static_cast<int>(grids_[p].nodes.size()) - 1;
      for (int k = 0; k < intervals; ++k, row += 2)
        defect_jacobian(z, static_cast<int>(p), k, row, out);
    }
    for (std::size_t p = 0; p < grids_.size(); ++p)
      for (int k = 0; k < static_cast<int>(grids_[p].nodes.size()); ++k)
        balance_jacobian(z, static_cast<int>(p), k, row++, out);
    for (std::size_t i = 0; i < scenario_.sites.size(); ++i)
      row += transition_jacobian(z, static_cast<int>(i), row, out);
  }

  void inequality_jacobian(std::span<const double> z, std::vector<nlp::Triplet>& out) const {
    int row = 0;
    for (std::size_t p = 0; p < grids_.size(); ++p) {
      const bool drive = grids_[p].kind == PhaseKind::drive;
      for (int k = 0; k < static_cast<int>(grids_[p].nodes.size()); ++k) {
        using D3 = Dual<3>;
        const int i_soc = var(static_cast<int>(p), k, detail::kSoc);
        const int i_tb = var(static_cast<int>(p), k, detail::kTb);
        const int i_pb = var(static_cast<int>(p), k, detail::kPb);
        const int i_hvch = var(static_cast<int>(p), k, detail::kHvch);
        const int i_hp = var(static_cast<int>(p), k, detail::kHp);
        const D3 soc = D3::seeded(z[static_cast<std::size_t>(i_soc)] * comp_scale_[detail::kSoc], 0);
        const D3 tb = D3::seeded(z[static_cast<std::size_t>(i_tb)] * comp_scale_[detail::kTb], 1);
        const D3 pb = D3::seeded(z[static_cast<std::size_t>(i_pb)] * comp_scale_[detail::kPb], 2);
        if (drive) {
          const D3 r = (pb - battery_s_.dchg_limit_w(soc, tb)) / comp_scale_[detail::kPb];
          emit(out, row++, {{i_soc, detail::kSoc}, {i_tb, detail::kTb}, {i_pb, detail::kPb}}, r);
        }
        {
          const D3 r = (battery_s_.chg_limit_w(soc, tb) - pb) / comp_scale_[detail::kPb];
          emit(out, row++, {{i_soc, detail::kSoc}, {i_tb, detail::kTb}, {i_pb, detail::kPb}}, r);
        }
        {
          const D3 tb2 = D3::seeded(z[static_cast<std::size_t>(i_tb)] * comp_scale_[detail::kTb], 0);
          const D3 hp = D3::seeded(z[static_cast<std::size_t>(i_hp)] * comp_scale_[detail::kHp], 1);
          const D3 hv =
              D3::seeded(z[static_cast<std::size_t>(i_hvch)] * comp_scale_[detail::kHvch], 2);
          const D3 r = (hv +
                        hvch_cabin_power(actuators_s_, scenario_.cabin, scenario_.t_amb_c,
                                         tb2, hp, opts_.hvch_smooth_w) -
                        actuators_s_.hvch_max_w) /
                       comp_scale_[detail::kHvch];
          emit(out, row++, {{i_tb, detail::kTb}, {i_hp, detail::kHp}, {i_hvch, detail::kHvch}}, r);
        }
      }
    }
  }

  nlp::NlpProblem as_nlp() const {
    nlp::NlpProblem p;
    p.n = n_vars_;
    p.lower = lower_;
    p.upper = upper_;
    p.n_eq = n_eq_;
    p.n_ineq = n_ineq_;
    p.objective = [this](std::span<const double> z) { return objective(z); };
    p.objective_gradient = [this](std::span<const double> z, std::span<double> g) {
      objective_gradient(z, g);
    };
    p.equality = [this](std::span<const double> z, std::span<double> h) { equalities(z, h); };
    p.inequality = [this](std::span<const double> z, std::span<double> g) { inequalities(z, g); };
    p.equality_jacobian = [this](std::span<const double> z, std::vector<nlp::Triplet>& t) {
      equality_jacobian(z, t);
    };
    p.inequality_jacobian = [this](std::span<const double> z, std::vector<nlp::Triplet>& t) {
      inequality_jacobian(z, t);
    };
    p.objective_hessian = [this](std::span<const double> z, std::vector<nlp::Triplet>& t) {
      objective_hessian(z, t);
    };
    p.constraint_hessian = [this](std::span<const double> z, std::span<const double> we,
                                  std::span<const double> wi, std::vector<nlp::Triplet>& t) {
      constraint_hessian(z, we, wi, t);
    };
    return p;
  }

  Trajectory unpack(std::span<const double> z) const {
    if (static_cast<int>(z.size()) != n_vars_)
      throw std::invalid_argument("unpack: vector length does not match layout");
    Trajectory traj;
    traj.zeta = zeta_;
    traj.t_chg_s.assign(scenario_.sites.size(), 0.0);
    const auto& bat = scenario_.battery;
    const auto& act = scenario_.actuators;
    const auto& cab = scenario_.cabin;
    for (std::size_t p = 0; p < grids_.size(); ++p) {
      const PhaseGrid& g = grids_[p];
      PhaseTrajectory pt;
      pt.kind = g.kind;
      pt.site_index = g.site_index;
      pt.node = g.nodes;
      const bool drive = g.kind == PhaseKind::drive;
      if (drive) {
        pt.v_mps = g.v_mps;
        pt.p_prop_w = g.p_prop_w;
      } else {
        pt.v_mps.assign(g.nodes.size(), 0.0);
        pt.p_prop_w.assign(g.nodes.size(), 0.0);
        pt.t_chg_s = z[static_cast<std::size_t>(tchg_var(static_cast<int>(p)))] * tchg_scale_;
        traj.t_chg_s[static_cast<std::size_t>(g.site_index)] = pt.t_chg_s;
      }
      for (int k = 0; k < static_cast<int>(g.nodes.size()); ++k) {
        const auto nv = node_values<double>(z, static_cast<int>(p), k);
        pt.soc.push_back(nv.soc);
        pt.tb_c.push_back(nv.tb);
        pt.p_hvch_b_w.push_back(nv.hvch);
        pt.p_hvac_b_w.push_back(nv.hvac);
        pt.p_hp_w.push_back(nv.hp);
        pt.p_grid_w.push_back(nv.grid);
        pt.p_b_w.push_back(nv.pb);
        const double v = drive ? g.v_mps[static_cast<std::size_t>(k)] : 0.0;
        const double prop = drive ? g.p_prop_w[static_cast<std::size_t>(k)] : 0.0;
        pt.q_pass_w.push_back(q_passive(bat, act, nv.soc, nv.tb, nv.pb, prop));
        pt.q_act_w.push_back(q_active(act, nv.hvch, nv.hvac, nv.hp, nv.tb));
        pt.q_exh_w.push_back(q_exchange(act, scenario_.t_amb_c, nv.tb, v));
        pt.hvch_cabin_w.push_back(
            hvch_cabin_power(act, cab, scenario_.t_amb_c, nv.tb, nv.hp));
        pt.cop.push_back(act.cop_by_temp_c(nv.tb));
      }
      traj.phases.push_back(std::move(pt));
    }
    // Cost breakdown with the exact occupancy hinge.
    for (std::size_t p = 0; p < grids_.size(); ++p) {
      if (grids_[p].kind != PhaseKind::charge) continue;
      const ChargerSite& site = scenario_.sites[static_cast<std::size_t>(grids_[p].site_index)];
      const double t_chg = traj.phases[p].t_chg_s;
      const double e_kwh = t_chg * grid_power_integral(z, static_cast<int>(p)) / 3.6e6;
      traj.cost.energy += site.energy_price_per_kwh * e_kwh;
      traj.cost.time += scenario_.time_price_per_h * (t_chg + site.detour_time_s) / 3600.0;
      traj.cost.occupancy +=
          site.occupancy_price_per_min * max0(t_chg - site.occupancy_free_s) / 60.0;
      traj.cost.detour += scenario_.detour_penalty;
      traj.charged_energy_kwh += e_kwh;
      traj.combined_time_s += t_chg + site.detour_time_s;
    }
    return traj;
  }

  std::vector<double> pack(const Trajectory& traj) const {
    std::vector<double> z(static_cast<std::size_t>(n_vars_), 0.0);
    if (traj.phases.size() != grids_.size())
      throw std::invalid_argument("pack: phase count mismatch");
    for (std::size_t p = 0; p < grids_.size(); ++p) {
      const PhaseTrajectory& pt = traj.phases[p];
      if (pt.node.size() != grids_[p].nodes.size())
        throw std::invalid_argument("pack: node count mismatch");
      for (int k = 0; k < static_cast<int>(pt.node.size()); ++k) {
        const std::size_t ku = static_cast<std::size_t>(k);
        set(z, static_cast<int>(p), k, detail::kSoc, pt.soc[ku]);
        set(z, static_cast<int>(p), k, detail::kTb, pt.tb_c[ku]);
        set(z, static_cast<int>(p), k, detail::kHvch, pt.p_hvch_b_w[ku]);
        set(z, static_cast<int>(p), k, detail::kHvac, pt.p_hvac_b_w[ku]);
        set(z, static_cast<int>(p), k, detail::kHp, pt.p_hp_w[ku]);
        set(z, static_cast<int>(p), k, detail::kGrid, pt.p_grid_w[ku]);
        set(z, static_cast<int>(p), k, detail::kPb, pt.p_b_w[ku]);
      }
      if (grids_[p].kind == PhaseKind::charge)
        z[static_cast<std::size_t>(tchg_var(static_cast<int>(p)))] = pt.t_chg_s / tchg_scale_;
    }
    return z;
  }

 private:
  void build_grids() {
    scenario_.validate();
    const auto phases = split_phases(scenario_);
    for (const Phase& ph : phases) {
      if (ph.kind == Phase::Kind::drive) {
        PhaseGrid g;
        g.kind = PhaseKind::drive;
        for (int k = 0;; ++k) {
          const double s = ph.s_from_m + k * opts_.ds_m;
          if (s >= ph.s_to_m - 1e-6) break;
          g.nodes.push_back(s);
        }
        g.nodes.push_back(ph.s_to_m);
        if (g.nodes.size() < 2) throw std::invalid_argument("transcribe: zero-length driving phase");
        for (double s : g.nodes) {
          g.v_mps.push_back(cycle_speed_at(scenario_.cycle, s));
          g.p_prop_w.push_back(cycle_prop_at(scenario_.cycle, s));
        }
        grids_.push_back(std::move(g));
      } else if (zeta_[static_cast<std::size_t>(ph.site_index)]) {
        PhaseGrid g;
        g.kind = PhaseKind::charge;
        g.site_index = ph.site_index;
        for (int k = 0; k <= opts_.tau_steps; ++k)
          g.nodes.push_back(static_cast<double>(k) / opts_.tau_steps);
        grids_.push_back(std::move(g));
      }
    }
    drive_phase_of_leg_.clear();
    charge_phase_of_site_.assign(scenario_.sites.size(), -1);
    for (std::size_t p = 0; p < grids_.size(); ++p) {
      if (grids_[p].kind == PhaseKind::drive)
        drive_phase_of_leg_.push_back(static_cast<int>(p));
      else
        charge_phase_of_site_[static_cast<std::size_t>(grids_[p].site_index)] =
            static_cast<int>(p);
    }
  }

  void build_layout() {
    comp_scale_[detail::kSoc] = 1.0;
    comp_scale_[detail::kTb] = 40.0;
    comp_scale_[detail::kHvch] = std::max(scenario_.actuators.hvch_max_w, 1000.0);
    comp_scale_[detail::kHvac] = std::max(scenario_.actuators.hvac_max_w, 1000.0);
    comp_scale_[detail::kHp] = std::max(scenario_.actuators.hp_max_w, 1000.0);
    double grid_max = 0.0;
    for (const auto& s : scenario_.sites) grid_max = std::max(grid_max, s.p_grid_max_w);
    comp_scale_[detail::kGrid] = std::max(grid_max, 1e4);
    comp_scale_[detail::kPb] = std::max(scenario_.battery.dchg_limit_w.max_value(),
                                        -scenario_.battery.chg_limit_w.min_value());
    tchg_scale_ = 3600.0;

    int cursor = 0;
    phase_first_.clear();
    for (const PhaseGrid& g : grids_) {
      phase_first_.push_back(cursor);
      cursor += static_cast<int>(g.nodes.size()) * detail::kVarsPerNode;
    }
    tchg_var_.assign(grids_.size(), -1);
    for (std::size_t p = 0; p < grids_.size(); ++p)
      if (grids_[p].kind == PhaseKind::charge) tchg_var_[p] = cursor++;
    n_vars_ = cursor;
  }

  void build_bounds() {
    const auto& b = scenario_.battery;
    const auto& a = scenario_.actuators;
    lower_.assign(static_cast<std::size_t>(n_vars_), 0.0);
    upper_.assign(static_cast<std::size_t>(n_vars_), 0.0);
    const double pb_hi = b.dchg_limit_w.max_value() * 1.05;
    const double pb_lo = b.chg_limit_w.min_value() * 1.05;
    for (std::size_t p = 0; p < grids_.size(); ++p) {
      const PhaseGrid& g = grids_[p];
      const bool drive = g.kind == PhaseKind::drive;
      const double grid_hi =
          drive ? 0.0
                : scenario_.sites[static_cast<std::size_t>(g.site_index)].p_grid_max_w;
      for (int k = 0; k < static_cast<int>(g.nodes.size()); ++k) {
        set_bound(static_cast<int>(p), k, detail::kSoc, b.soc_min, b.soc_max);
        set_bound(static_cast<int>(p), k, detail::kTb, b.tb_min_c, b.tb_max_c);
        set_bound(static_cast<int>(p), k, detail::kHvch, 0.0, a.hvch_max_w);
        set_bound(static_cast<int>(p), k, detail::kHvac, 0.0, a.hvac_max_w);
        set_bound(static_cast<int>(p), k, detail::kHp, 0.0, a.hp_max_w);
        set_bound(static_cast<int>(p), k, detail::kGrid, 0.0, grid_hi);
        set_bound(static_cast<int>(p), k, detail::kPb, pb_lo, drive ? pb_hi : 0.0);
      }
    }
    // Boundary conditions: pinned initial state, terminal soc floor.
    set_bound(0, 0, detail::kSoc, scenario_.soc0, scenario_.soc0);
    set_bound(0, 0, detail::kTb, scenario_.tb0_c, scenario_.tb0_c);
    const int last_phase = static_cast<int>(grids_.size()) - 1;
    const int last_node = static_cast<int>(grids_.back().nodes.size()) - 1;
    const std::size_t iv = static_cast<std::size_t>(var(last_phase, last_node, detail::kSoc));
    lower_[iv] = std::max(b.soc_min, scenario_.socf) / comp_scale_[detail::kSoc];
    for (std::size_t p = 0; p < grids_.size(); ++p)
      if (tchg_var_[p] >= 0) {
        lower_[static_cast<std::size_t>(tchg_var_[p])] = 0.0;
        upper_[static_cast<std::size_t>(tchg_var_[p])] = scenario_.t_chg_max_s / tchg_scale_;
      }
  }

  void set_bound(int phase, int node, int comp, double lo, double hi) {
    const std::size_t i = static_cast<std::size_t>(var(phase, node, comp));
    lower_[i] = lo / comp_scale_[static_cast<std::size_t>(comp)];
    upper_[i] = hi / comp_scale_[static_cast<std::size_t>(comp)];
  }

  void count_rows() {
    int eq = 0;
    for (const PhaseGrid& g : grids_) eq += 2 * (static_cast<int>(g.nodes.size()) - 1);
    for (const PhaseGrid& g : grids_) eq += static_cast<int>(g.nodes.size());
    for (std::size_t i = 0; i < scenario_.sites.size(); ++i) eq += zeta_[i] ? 4 : 2;
    n_eq_ = eq;
    int ineq = 0;
    for (const PhaseGrid& g : grids_)
      ineq += static_cast<int>(g.nodes.size()) * (g.kind == PhaseKind::drive ? 3 : 2);
    n_ineq_ = ineq;
  }

  template <class T>
  detail::NodeVars<T> node_values(std::span<const double> z, int phase, int node) const {
    detail::NodeVars<T> nv;
    nv.soc = z[static_cast<std::size_t>(var(phase, node, detail::kSoc))] * comp_scale_[detail::kSoc];
    nv.tb = z[static_cast<std::size_t>(var(phase, node, detail::kTb))] * comp_scale_[detail::kTb];
    nv.hvch =
        z[static_cast<std::size_t>(var(phase, node, detail::kHvch))] * comp_scale_[detail::kHvch];
    nv.hvac =
        z[static_cast<std::size_t>(var(phase, node, detail::kHvac))] * comp_scale_[detail::kHvac];
    nv.hp = z[static_cast<std::size_t>(var(phase, node, detail::kHp))] * comp_scale_[detail::kHp];
    nv.grid =
        z[static_cast<std::size_t>(var(phase, node, detail::kGrid))] * comp_scale_[detail::kGrid];
    nv.pb = z[static_cast<std::size_t>(var(phase, node, detail::kPb))] * comp_scale_[detail::kPb];
    return nv;
  }

  void set(std::vector<double>& z, int phase, int node, int comp, double physical) const {
    z[static_cast<std::size_t>(var(phase, node, comp))] =
        physical / comp_scale_[static_cast<std::size_t>(comp)];
  }

  double grid_power_integral(std::span<const double> z, int phase) const {
    const PhaseGrid& g = grids_[static_cast<std::size_t>(phase)];
    const int n = static_cast<int>(g.nodes.size());
    const double dtau = 1.0 / static_cast<double>(n - 1);
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
      const double w = (k == 0 || k == n - 1) ? 0.5 * dtau : dtau;
      acc += w * z[static_cast<std::size_t>(var(phase, k, detail::kGrid))] *
             comp_scale_[detail::kGrid];
    }
    return acc;
  }

  // ---- dynamics kernels ----------------------------------------------------

  // Dynamics-relevant controls at an interval endpoint: hvch, hvac, hp, pb.
  template <class T>
  struct Ctrl4 {
    T hvch, hvac, hp, pb;
  };

  template <class T>
  StateRate<T> rate_drive(const T& soc, const T& tb, const Ctrl4<T>& u, double v,
                          double p_prop) const {
    StateRate<T> r = state_rate_per_second(battery_s_, actuators_s_, soc, tb, u.hvch,
                                           u.hvac, u.hp, u.pb, v, p_prop, scenario_.t_amb_c);
    r.dsoc = r.dsoc / v;
    r.dtb = r.dtb / v;
    return r;
  }

  template <class T>
  StateRate<T> rate_charge(const T& soc, const T& tb, const Ctrl4<T>& u) const {
    return state_rate_per_second(battery_s_, actuators_s_, soc, tb, u.hvch, u.hvac,
                                 u.hp, u.pb, 0.0, 0.0, scenario_.t_amb_c);
  }

  // RK4 step across interval k of a phase; controls interpolate linearly.
  template <class T>
  void defect_kernel(int phase, int k, const T& soc0, const T& tb0, const Ctrl4<T>& u0,
                     const T& soc1, const T& tb1, const Ctrl4<T>& u1, const T& t_chg,
                     T out[2]) const {
    const PhaseGrid& g = grids_[static_cast<std::size_t>(phase)];
    const Ctrl4<T> um{0.5 * (u0.hvch + u1.hvch), 0.5 * (u0.hvac + u1.hvac),
                      0.5 * (u0.hp + u1.hp), 0.5 * (u0.pb + u1.pb)};
    T es, et;
    if (g.kind == PhaseKind::drive) {
      const std::size_t ku = static_cast<std::size_t>(k);
      const double h = g.nodes[ku + 1] - g.nodes[ku];
      const double v0 = g.v_mps[ku], v1 = g.v_mps[ku + 1], vm = 0.5 * (v0 + v1);
      const double p0 = g.p_prop_w[ku], p1 = g.p_prop_w[ku + 1], pm = 0.5 * (p0 + p1);
      const StateRate<T> k1 = rate_drive(soc0, tb0, u0, v0, p0);
      const StateRate<T> k2 =
          rate_drive(soc0 + 0.5 * h * k1.dsoc, tb0 + 0.5 * h * k1.dtb, um, vm, pm);
      const StateRate<T> k3 =
          rate_drive(soc0 + 0.5 * h * k2.dsoc, tb0 + 0.5 * h * k2.dtb, um, vm, pm);
      const StateRate<T> k4 = rate_drive(soc0 + h * k3.dsoc, tb0 + h * k3.dtb, u1, v1, p1);
      es = soc0 + h / 6.0 * (k1.dsoc + 2.0 * k2.dsoc + 2.0 * k3.dsoc + k4.dsoc);
      et = tb0 + h / 6.0 * (k1.dtb + 2.0 * k2.dtb + 2.0 * k3.dtb + k4.dtb);
    } else {
      const double h = g.nodes[static_cast<std::size_t>(k) + 1] - g.nodes[static_cast<std::size_t>(k)];
      const StateRate<T> f1 = rate_charge(soc0, tb0, u0);
      const StateRate<T> k1{t_chg * f1.dsoc, t_chg * f1.dtb};
      const StateRate<T> f2 =
          rate_charge(soc0 + 0.5 * h * k1.dsoc, tb0 + 0.5 * h * k1.dtb, um);
      const StateRate<T> k2{t_chg * f2.dsoc, t_chg * f2.dtb};
      const StateRate<T> f3 =
          rate_charge(soc0 + 0.5 * h * k2.dsoc, tb0 + 0.5 * h * k2.dtb, um);
      const StateRate<T> k3{t_chg * f3.dsoc, t_chg * f3.dtb};
      const StateRate<T> f4 = rate_charge(soc0 + h * k3.dsoc, tb0 + h * k3.dtb, u1);
      const StateRate<T> k4{t_chg * f4.dsoc, t_chg * f4.dtb};
      es = soc0 + h / 6.0 * (k1.dsoc + 2.0 * k2.dsoc + 2.0 * k3.dsoc + k4.dsoc);
      et = tb0 + h / 6.0 * (k1.dtb + 2.0 * k2.dtb + 2.0 * k3.dtb + k4.dtb);
    }
    out[0] = (soc1 - es) / comp_scale_[detail::kSoc];
    out[1] = (tb1 - et) / comp_scale_[detail::kTb];
  }

  void defect_values(std::span<const double> z, int phase, int k, double out[2]) const {
    const auto n0 = node_values<double>(z, phase, k);
    const auto n1 = node_values<double>(z, phase, k + 1);
    const double t_chg = grids_[static_cast<std::size_t>(phase)].kind == PhaseKind::charge
                             ? z[static_cast<std::size_t>(tchg_var(phase))] * tchg_scale_
                             : 0.0;
    defect_kernel<double>(phase, k, n0.soc, n0.tb, {n0.hvch, n0.hvac, n0.hp, n0.pb}, n1.soc, n1.tb,
                          {n1.hvch, n1.hvac, n1.hp, n1.pb}, t_chg, out);
  }

  void defect_jacobian(std::span<const double> z, int phase, int k, int first_row,
                       std::vector<nlp::Triplet>& out) const {
    using D = Dual<13>;
    const bool charge = grids_[static_cast<std::size_t>(phase)].kind == PhaseKind::charge;
    // Seed slots: x0 comps, u0 dynamics comps, x1 comps, u1 dynamics comps, t_chg.
    const int comps[6] = {detail::kSoc, detail::kTb, detail::kHvch,
                          detail::kHvac, detail::kHp, detail::kPb};
    int cols[13];
    double scales[13];
    D seed[13];
    int slot = 0;
    for (int node = k; node <= k + 1; ++node) {
      for (int c = 0; c < 6; ++c) {
        const int vi = var(phase, node, comps[c]);
        cols[slot] = vi;
        scales[slot] = comp_scale_[static_cast<std::size_t>(comps[c])];
        seed[slot] = D::seeded(z[static_cast<std::size_t>(vi)] * scales[slot], slot);
        ++slot;
      }
    }
    D t_chg(0.0);
    int n_slots = slot;
    if (charge) {
      const int vi = tchg_var(phase);
      cols[slot] = vi;
      scales[slot] = tchg_scale_;
      t_chg = D::seeded(z[static_cast<std::size_t>(vi)] * tchg_scale_, slot);
      n_slots = ++slot;
    }
    D r[2];
    defect_kernel<D>(phase, k, seed[0], seed[1], {seed[2], seed[3], seed[4], seed[5]}, seed[6],
                     seed[7], {seed[8], seed[9], seed[10], seed[11]}, t_chg, r);
    for (int row = 0; row < 2; ++row)
      for (int s = 0; s < n_slots; ++s) {
        const double dv = r[row].d[static_cast<std::size_t>(s)] * scales[s];
        if (dv != 0.0) out.push_back({first_row + row, cols[s], dv});
      }
  }

  double balance_value(std::span<const double> z, int phase, int k) const {
    const auto nv = node_values<double>(z, phase, k);
    const PhaseGrid& g = grids_[static_cast<std::size_t>(phase)];
    const double prop =
        g.kind == PhaseKind::drive ? g.p_prop_w[static_cast<std::size_t>(k)] : 0.0;
    return power_balance_residual(battery_s_, actuators_s_, scenario_.cabin, nv.soc,
                                  nv.tb, nv.hvch, nv.hvac, nv.hp, nv.grid, nv.pb, prop,
                                  scenario_.t_amb_c, opts_.hvch_smooth_w) /
           comp_scale_[detail::kPb];
  }

  void balance_jacobian(std::span<const double> z, int phase, int k, int row,
                        std::vector<nlp::Triplet>& out) const {
    using D = Dual<7>;
    const PhaseGrid& g = grids_[static_cast<std::size_t>(phase)];
    const double prop =
        g.kind == PhaseKind::drive ? g.p_prop_w[static_cast<std::size_t>(k)] : 0.0;
    int cols[7];
    double scales[7];
    D seed[7];
    for (int c = 0; c < detail::kVarsPerNode; ++c) {
      const int vi = var(phase, k, c);
      cols[c] = vi;
      scales[c] = comp_scale_[static_cast<std::size_t>(c)];
      seed[c] = D::seeded(z[static_cast<std::size_t>(vi)] * scales[c], c);
    }
    const D r = power_balance_residual(battery_s_, actuators_s_, scenario_.cabin,
                                       seed[detail::kSoc], seed[detail::kTb], seed[detail::kHvch],
                                       seed[detail::kHvac], seed[detail::kHp], seed[detail::kGrid],
                                       seed[detail::kPb], prop, scenario_.t_amb_c,
                                       opts_.hvch_smooth_w) /
                comp_scale_[detail::kPb];
    for (int c = 0; c < detail::kVarsPerNode; ++c) {
      const double dv = r.d[static_cast<std::size_t>(c)] * scales[c];
      if (dv != 0.0) out.push_back({row, cols[c], dv});
    }
  }

  template <class T>
  T hvch_capacity_value_t(const T& tb, const T& hp, const T& hvch) const {
    return (hvch +
            hvch_cabin_power(actuators_s_, scenario_.cabin, scenario_.t_amb_c, tb, hp,
                             opts_.hvch_smooth_w) -
            actuators_s_.hvch_max_w) /
           comp_scale_[detail::kHvch];
  }

  double hvch_capacity_value(const detail::NodeVars<double>& nv) const {
    return hvch_capacity_value_t<double>(nv.tb, nv.hp, nv.hvch);
  }

  // Transition equalities around site i. Returns the number of rows written.
  int transition_values(std::span<const double> z, int site, double out[4]) const {
    const int leg_before = drive_phase_of_leg_[static_cast<std::size_t>(site)];
    const int leg_after = drive_phase_of_leg_[static_cast<std::size_t>(site) + 1];
    const int last = static_cast<int>(grids_[static_cast<std::size_t>(leg_before)].nodes.size()) - 1;
    const auto end_prev = node_values<double>(z, leg_before, last);
    const auto start_next = node_values<double>(z, leg_after, 0);
    if (!zeta_[static_cast<std::size_t>(site)]) {
      out[0] = (start_next.soc - end_prev.soc) / comp_scale_[detail::kSoc];
      out[1] = (start_next.tb - end_prev.tb) / comp_scale_[detail::kTb];
      return 2;
    }
    const int cp = charge_phase_of_site_[static_cast<std::size_t>(site)];
    const int clast = static_cast<int>(grids_[static_cast<std::size_t>(cp)].nodes.size()) - 1;
    const auto chg0 = node_values<double>(z, cp, 0);
    const auto chg1 = node_values<double>(z, cp, clast);
    const ChargerSite& s = scenario_.sites[static_cast<std::size_t>(site)];
    const auto d_in = detour_leg_offset<double>(battery_s_, actuators_s_,
                                                end_prev.soc, end_prev.tb, scenario_.t_amb_c,
                                                s.detour_time_s, s.detour_energy_wh,
                                                opts_.v_detour_mps);
    const auto d_out = detour_leg_offset<double>(battery_s_, actuators_s_, chg1.soc,
                                                 chg1.tb, scenario_.t_amb_c, s.detour_time_s,
                                                 s.detour_energy_wh, opts_.v_detour_mps);
    out[0] = (chg0.soc - (end_prev.soc - d_in.dsoc)) / comp_scale_[detail::kSoc];
    out[1] = (chg0.tb - (end_prev.tb - d_in.dtb)) / comp_scale_[detail::kTb];
    out[2] = (start_next.soc - (chg1.soc - d_out.dsoc)) / comp_scale_[detail::kSoc];
    out[3] = (start_next.tb - (chg1.tb - d_out.dtb)) / comp_scale_[detail::kTb];
    return 4;
  }

  int transition_jacobian(std::span<const double> z, int site, int first_row,
                          std::vector<nlp::Triplet>& out) const {
    using D = Dual<4>;
    const int leg_before = drive_phase_of_leg_[static_cast<std::size_t>(site)];
    const int leg_after = drive_phase_of_leg_[static_cast<std::size_t>(site) + 1];
    const int last = static_cast<int>(grids_[static_cast<std::size_t>(leg_before)].nodes.size()) - 1;
    const ChargerSite& s = scenario_.sites[static_cast<std::size_t>(site)];

    // One jump: rows (to - (from - zeta*delta(from))) for soc and tb.
    auto emit_jump = [&](int from_phase, int from_node, int to_phase, int to_node, bool active,
                         int row0) {
      const int i_fs = var(from_phase, from_node, detail::kSoc);
      const int i_ft = var(from_phase, from_node, detail::kTb);
      const int i_ts = var(to_phase, to_node, detail::kSoc);
      const int i_tt = var(to_phase, to_node, detail::kTb);
      const D fs = D::seeded(z[static_cast<std::size_t>(i_fs)] * comp_scale_[detail::kSoc], 0);
      const D ft = D::seeded(z[static_cast<std::size_t>(i_ft)] * comp_scale_[detail::kTb], 1);
      const D ts = D::seeded(z[static_cast<std::size_t>(i_ts)] * comp_scale_[detail::kSoc], 2);
      const D tt = D::seeded(z[static_cast<std::size_t>(i_tt)] * comp_scale_[detail::kTb], 3);
      D rs, rt;
      if (active) {
        const auto d = detour_leg_offset<D>(battery_s_, actuators_s_, fs, ft,
                                            scenario_.t_amb_c, s.detour_time_s, s.detour_energy_wh,
                                            opts_.v_detour_mps);
        rs = (ts - (fs - d.dsoc)) / comp_scale_[detail::kSoc];
        rt = (tt - (ft - d.dtb)) / comp_scale_[detail::kTb];
      } else {
        rs = (ts - fs) / comp_scale_[detail::kSoc];
        rt = (tt - ft) / comp_scale_[detail::kTb];
      }
      const int cols[4] = {i_fs, i_ft, i_ts, i_tt};
      const double scl[4] = {comp_scale_[detail::kSoc], comp_scale_[detail::kTb],
                             comp_scale_[detail::kSoc], comp_scale_[detail::kTb]};
      const D* rows[2] = {&rs, &rt};
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) {
          const double dv = rows[r]->d[static_cast<std::size_t>(c)] * scl[c];
          if (dv != 0.0) out.push_back({row0 + r, cols[c], dv});
        }
    };

    if (!zeta_[static_cast<std::size_t>(site)]) {
      emit_jump(leg_before, last, leg_after, 0, false, first_row);
      return 2;
    }
    const int cp = charge_phase_of_site_[static_cast<std::size_t>(site)];
    const int clast = static_cast<int>(grids_[static_cast<std::size_t>(cp)].nodes.size()) - 1;
    emit_jump(leg_before, last, cp, 0, true, first_row);
    emit_jump(cp, clast, leg_after, 0, true, first_row + 2);
    return 4;
  }

  void emit(std::vector<nlp::Triplet>& out, int row,
            std::initializer_list<std::pair<int, int>> slots, const Dual<3>& r) const {
    int s = 0;
    for (const auto& [col, comp] : slots) {
      const double dv =
          r.d[static_cast<std::size_t>(s)] * comp_scale_[static_cast<std::size_t>(comp)];
      ++s;
      if (dv != 0.0) out.push_back({row, col, dv});
    }
  }

  Scenario scenario_;
  std::vector<std::uint8_t> zeta_;
  GridOptions opts_;
  BatteryParams battery_s_;        // kink-smoothed copies used by evaluators
  ThermalActuators actuators_s_;
  std::vector<PhaseGrid> grids_;
  std::vector<double> lower_, upper_;
  std::vector<int> phase_first_, tchg_var_;
  std::vector<int> drive_phase_of_leg_;   // leg index 0..N -> phase index
  std::vector<int> charge_phase_of_site_; // site -> phase index or -1
  double comp_scale_[detail::kVarsPerNode] = {};
  double tchg_scale_ = 3600.0;
  int n_vars_ = 0, n_eq_ = 0, n_ineq_ = 0;

  friend class TranscriptionTestAccess;
};

inline TranscribedNLP build(const Scenario& scenario, std::span<const std::uint8_t> zeta,
                            const GridOptions& opts = {}) {
  return TranscribedNLP(scenario, std::vector<std::uint8_t>(zeta.begin(), zeta.end()), opts);
}

}  // namespace bevopt::ocp
