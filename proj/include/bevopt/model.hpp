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
#include <stdexcept>
#include <utility>

#include "bevopt/interp.hpp"

namespace bevopt {

// Battery pack: equivalent circuit (open-circuit voltage + internal
// resistance), lumped thermal mass, and temperature/SoC-dependent charge and
// discharge power limit maps.
struct BatteryParams {
  double capacity_coulomb = 0.0;      // C_b in coulomb (Ah * 3600)
  Curve1D ocv_v_by_soc;               // U_oc(soc), volts
  Curve1D resistance_ohm_by_temp_c;   // R_b(T_b), ohms
  double heat_capacity_j_per_k = 0.0; // c_p * m_b
  double soc_min = 0.0, soc_max = 1.0;
  double tb_min_c = -30.0, tb_max_c = 40.0;
  Table2D dchg_limit_w;  // (soc, T_b C) -> max discharge power >= 0
  Table2D chg_limit_w;   // (soc, T_b C) -> min (most negative) charge power <= 0

  void validate() const {
    if (!(capacity_coulomb > 0.0)) throw std::invalid_argument("battery: capacity must be > 0");
    if (!(heat_capacity_j_per_k > 0.0))
      throw std::invalid_argument("battery: heat capacity must be > 0");
    if (!ocv_v_by_soc.nondecreasing())
      throw std::invalid_argument("battery: OCV curve must be nondecreasing in soc");
    if (!resistance_ohm_by_temp_c.nonincreasing())
      throw std::invalid_argument("battery: resistance curve must be nonincreasing in temp");
    if (resistance_ohm_by_temp_c.min_value() < 0.0)
      throw std::invalid_argument("battery: resistance must be >= 0");
    if (!(soc_min >= 0.0 && soc_max <= 1.0 && soc_min < soc_max))
      throw std::invalid_argument("battery: bad soc bounds");
    if (!(tb_min_c < tb_max_c)) throw std::invalid_argument("battery: bad temperature bounds");
    if (dchg_limit_w.min_value() < 0.0)
      throw std::invalid_argument("battery: discharge limit map must be >= 0");
    if (dchg_limit_w.values().size()) {
      if (!dchg_limit_w.nondecreasing_in_x() || !dchg_limit_w.nondecreasing_in_y())
        throw std::invalid_argument("battery: discharge map must be nondecreasing in soc and temp");
    }
    if (chg_limit_w.max_value() > 0.0)
      throw std::invalid_argument("battery: charge limit map must be <= 0");
    if (chg_limit_w.values().size()) {
      // |chg| nondecreasing in temp, nonincreasing in soc
      if (!chg_limit_w.nonincreasing_in_y() || !chg_limit_w.nondecreasing_in_x())
        throw std::invalid_argument("battery: charge map shape violates Fig.-3-style monotonicity");
    }
  }
};

// Thermal actuators: HVCH (heating), HVAC (cooling), heat pump, plus ambient
// exchange and drivetrain-loss coefficients.
struct ThermalActuators {
  double hvch_max_w = 0.0;
  double hvac_max_w = 0.0;
  double hp_max_w = 0.0;
  double eta_hvch = 1.0;        // electric-to-heat efficiency, <= 1
  double eta_hvac = 1.0;        // cooling CoP; may exceed 1
  Curve1D cop_by_temp_c;        // heat-pump CoP vs battery temperature
  double ed_loss_fraction = 0.0;              // drivetrain heat as fraction of max(0, P_prop)
  double exch_coeff_base_w_per_k = 0.0;       // gamma(v) = base + speed * v
  double exch_coeff_speed_w_s_per_k_m = 0.0;

  void validate() const {
    if (hvch_max_w < 0.0 || hvac_max_w < 0.0 || hp_max_w < 0.0)
      throw std::invalid_argument("actuators: power limits must be >= 0");
    if (!(eta_hvch > 0.0 && eta_hvch <= 1.0))
      throw std::invalid_argument("actuators: eta_hvch must be in (0, 1]");
    if (!(eta_hvac > 0.0)) throw std::invalid_argument("actuators: eta_hvac must be > 0");
    if (cop_by_temp_c.min_value() < 1.0)
      throw std::invalid_argument("actuators: CoP curve must be >= 1");
    if (!cop_by_temp_c.nondecreasing())
      throw std::invalid_argument("actuators: CoP curve must be nondecreasing in temp");
    if (ed_loss_fraction < 0.0) throw std::invalid_argument("actuators: ed_loss_fraction < 0");
    if (exch_coeff_base_w_per_k < 0.0 || exch_coeff_speed_w_s_per_k_m < 0.0)
      throw std::invalid_argument("actuators: exchange coefficients must be >= 0");
  }
};

// Static cabin heat demand: conductance * (set point - ambient), floored at 0,
// plus a constant auxiliary electric load.
struct CabinModel {
  double set_point_c = 20.0;
  double conductance_w_per_k = 0.0;
  double aux_power_w = 0.0;

  void validate() const {
    if (conductance_w_per_k < 0.0) throw std::invalid_argument("cabin: conductance < 0");
    if (aux_power_w < 0.0) throw std::invalid_argument("cabin: aux power < 0");
  }
};

struct State {
  double soc = 0.0;
  double tb_c = 0.0;
};

// Control allocation at one grid point. p_b_w is the battery terminal power
// (positive discharging), a decision variable tied to the rest through the
// power balance equality.
struct Control {
  double p_hvch_b_w = 0.0;
  double p_hvac_b_w = 0.0;
  double p_hp_w = 0.0;
  double p_grid_w = 0.0;
  double p_b_w = 0.0;
};

enum class PowerMode { driving, charging };

template <class T>
T ocv(const BatteryParams& p, const T& soc) {
  return p.ocv_v_by_soc(soc);
}

template <class T>
T resistance(const BatteryParams& p, const T& tb_c) {
  return p.resistance_ohm_by_temp_c(tb_c);
}

// gamma(v): speed-dependent battery/ambient heat-exchange coefficient.
inline double exchange_coeff(const ThermalActuators& a, double v_mps) {
  return a.exch_coeff_base_w_per_k + a.exch_coeff_speed_w_s_per_k_m * v_mps;
}

// d soc / d t, 1/s. The per-meter variant below divides by speed.
template <class T>
T soc_rate_per_second(const BatteryParams& p, const T& soc, const T& p_b_w) {
  return -p_b_w / (p.capacity_coulomb * ocv(p, soc));
}

template <class T>
T soc_rate_per_meter(const BatteryParams& p, const T& soc, const T& p_b_w, double v_mps) {
  if (!(v_mps > 0.0))
    throw std::domain_error("soc_rate_per_meter: speed must be > 0 while driving");
  return soc_rate_per_second(p, soc, p_b_w) / v_mps;
}

// Irreversible Joule heat plus drivetrain losses.
template <class T>
T q_passive(const BatteryParams& p, const ThermalActuators& a, const T& soc, const T& tb_c,
            const T& p_b_w, double p_prop_w) {
  const T u = ocv(p, soc);
  const T joule = resistance(p, tb_c) * p_b_w * p_b_w / (u * u);
  return joule + a.ed_loss_fraction * max0(p_prop_w);
}

// Heat the pump removes from the battery loop while delivering cop*P_hp to
// the cabin side.
template <class T>
T q_hp_from_battery(const ThermalActuators& a, const T& tb_c, const T& p_hp_w) {
  return (a.cop_by_temp_c(tb_c) - 1.0) * p_hp_w;
}

template <class T>
T q_active(const ThermalActuators& a, const T& p_hvch_b_w, const T& p_hvac_b_w, const T& p_hp_w,
           const T& tb_c) {
  return a.eta_hvch * p_hvch_b_w - a.eta_hvac * p_hvac_b_w - q_hp_from_battery(a, tb_c, p_hp_w);
}

template <class T>
T q_exchange(const ThermalActuators& a, double t_amb_c, const T& tb_c, double v_mps) {
  return exchange_coeff(a, v_mps) * (t_amb_c - tb_c);
}

// CoP realized by the pump; equals the curve value by construction of
// q_hp_from_battery, independent of the applied power.
inline double hp_cop(const ThermalActuators& a, double tb_c, double p_hp_w) {
  if (!(p_hp_w > 0.0)) throw std::domain_error("hp_cop: CoP undefined for p_hp <= 0");
  return (q_hp_from_battery(a, tb_c, p_hp_w) + p_hp_w) / p_hp_w;
}

inline double cabin_demand(const CabinModel& c, double t_amb_c) {
  return max0(c.conductance_w_per_k * (c.set_point_c - t_amb_c));
}

// Electric HVCH power needed for the cabin after the heat pump's delivery is
// credited. smooth_width > 0 replaces the max(0,.) kink with softplus for use
// inside NLP evaluators; 0 gives the exact demand-matching value.
template <class T>
T hvch_cabin_power(const ThermalActuators& a, const CabinModel& c, double t_amb_c, const T& tb_c,
                   const T& p_hp_w, double smooth_width = 0.0) {
  const double demand = cabin_demand(c, t_amb_c);
  const T uncovered = T(demand) - a.cop_by_temp_c(tb_c) * p_hp_w;
  const T heat = smooth_width > 0.0 ? softplus_pos(uncovered, smooth_width) : max0(uncovered);
  return heat / a.eta_hvch;
}

// Left-minus-right residual of the power balance; zero at any physically
// consistent operating point.
template <class T>
T power_balance_residual(const BatteryParams& p, const ThermalActuators& a, const CabinModel& c,
                         const T& soc, const T& tb_c, const T& p_hvch_b_w, const T& p_hvac_b_w,
                         const T& p_hp_w, const T& p_grid_w, const T& p_b_w, double p_prop_w,
                         double t_amb_c, double hvch_smooth_w = 0.0) {
  const T u = ocv(p, soc);
  const T joule = resistance(p, tb_c) * p_b_w * p_b_w / (u * u);
  const T consumers = joule + p_prop_w + p_hvch_b_w + p_hvac_b_w +
                      hvch_cabin_power(a, c, t_amb_c, tb_c, p_hp_w, hvch_smooth_w) + p_hp_w +
                      c.aux_power_w;
  return p_grid_w + p_b_w - consumers;
}

inline double power_balance_residual(const BatteryParams& p, const ThermalActuators& a,
                                     const CabinModel& c, const State& x, const Control& u,
                                     double p_prop_w, double t_amb_c) {
  return power_balance_residual(p, a, c, x.soc, x.tb_c, u.p_hvch_b_w, u.p_hvac_b_w, u.p_hp_w,
                                u.p_grid_w, u.p_b_w, p_prop_w, t_amb_c);
}

// Battery terminal power bounds per Fig.-3-style maps. Driving allows regen
// down to the charge limit; at a charge stop discharge is forbidden and the
// charge limit is gated by the charger-use decision.
inline std::pair<double, double> battery_power_bounds(const BatteryParams& p, double soc,
                                                      double tb_c, PowerMode mode, int zeta) {
  const double lo = p.chg_limit_w(soc, tb_c);
  if (mode == PowerMode::driving) return {lo, p.dchg_limit_w(soc, tb_c)};
  return {zeta ? lo : 0.0, 0.0};
}

template <class T>
struct StateRate {
  T dsoc;
  T dtb;
};

// Time-domain dynamics h = [d soc/dt, d T_b/dt]; shared by the distance-domain
// driving dynamics (divide by v) and the normalized-time charging dynamics
// (multiply by t_chg). v_mps = 0 with p_prop_w = 0 models the parked vehicle.
template <class T>
StateRate<T> state_rate_per_second(const BatteryParams& p, const ThermalActuators& a, const T& soc,
                                   const T& tb_c, const T& p_hvch_b_w, const T& p_hvac_b_w,
                                   const T& p_hp_w, const T& p_b_w, double v_mps, double p_prop_w,
                                   double t_amb_c) {
  StateRate<T> r;
  r.dsoc = soc_rate_per_second(p, soc, p_b_w);
  const T heat = q_passive(p, a, soc, tb_c, p_b_w, p_prop_w) +
                 q_active(a, p_hvch_b_w, p_hvac_b_w, p_hp_w, tb_c) +
                 q_exchange(a, t_amb_c, tb_c, v_mps);
  r.dtb = heat / p.heat_capacity_j_per_k;
  return r;
}

template <class T>
StateRate<T> state_rate_per_meter(const BatteryParams& p, const ThermalActuators& a,
                                  [[maybe_unused]] const CabinModel& c, const T& soc, const T& tb_c,
                                  const T& p_hvch_b_w, const T& p_hvac_b_w, const T& p_hp_w,
                                  const T& p_b_w, double v_mps, double p_prop_w, double t_amb_c) {
  if (!(v_mps > 0.0))
    throw std::domain_error("state_rate_per_meter: speed must be > 0 while driving");
  StateRate<T> r = state_rate_per_second(p, a, soc, tb_c, p_hvch_b_w, p_hvac_b_w, p_hp_w, p_b_w,
                                         v_mps, p_prop_w, t_amb_c);
  r.dsoc = r.dsoc / v_mps;
  r.dtb = r.dtb / v_mps;
  return r;
}

inline StateRate<double> state_rate_per_meter(const BatteryParams& p, const ThermalActuators& a,
                                              const CabinModel& c, const State& x, const Control& u,
                                              double v_mps, double p_prop_w, double t_amb_c) {
  return state_rate_per_meter<double>(p, a, c, x.soc, x.tb_c, u.p_hvch_b_w, u.p_hvac_b_w, u.p_hp_w,
                                      u.p_b_w, v_mps, p_prop_w, t_amb_c);
}

template <class T>
struct StateDelta {
  T dsoc;
  T dtb;
};

// State drop over one detour leg (half of the round trip to a charger): the
// energy share E_d/2 converted through the OCV, and passive relaxation toward
// ambient over t_d/2 at the detour speed.
template <class T>
StateDelta<T> detour_leg_offset(const BatteryParams& p, const ThermalActuators& a, const T& soc,
                                const T& tb_c, double t_amb_c, double detour_time_s,
                                double detour_energy_wh, double v_detour_mps = 8.33) {
  StateDelta<T> d;
  d.dsoc = (0.5 * detour_energy_wh * 3600.0) / (p.capacity_coulomb * ocv(p, soc));
  const double relax =
      1.0 - std::exp(-exchange_coeff(a, v_detour_mps) * (0.5 * detour_time_s) /
                     p.heat_capacity_j_per_k);
  d.dtb = (tb_c - t_amb_c) * relax;
  return d;
}

// ---------------------------------------------------------------------------
// Default parameter set. Table-driven values follow the shipped parameter
// file; the maps are synthetic but keep the published monotone shapes.

inline Table2D default_dchg_limit_w() {
  const std::vector<double> soc = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  const std::vector<double> temp = {-20.0, -10.0, 0.0, 10.0, 25.0, 40.0};
  const std::vector<double> f_soc = {0.05, 0.50, 0.75, 0.90, 1.00, 1.00};
  const std::vector<double> f_temp = {0.40, 0.55, 0.70, 0.85, 1.00, 1.00};
  std::vector<double> v;
  v.reserve(36);
  for (double fs : f_soc)
    for (double ft : f_temp) v.push_back(300000.0 * fs * ft);
  return Table2D(soc, temp, v);
}

inline Table2D default_chg_limit_w() {
  const std::vector<double> soc = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  const std::vector<double> temp = {-20.0, -10.0, 0.0, 10.0, 25.0, 40.0};
  const std::vector<double> f_soc = {1.00, 0.95, 0.85, 0.70, 0.45, 0.08};
  const std::vector<double> f_temp = {0.06, 0.125, 0.30, 0.60, 0.95, 1.00};
  std::vector<double> v;
  v.reserve(36);
  for (double fs : f_soc)
    for (double ft : f_temp) v.push_back(-200000.0 * fs * ft);
  return Table2D(soc, temp, v);
}

inline BatteryParams default_battery() {
  BatteryParams b;
  b.capacity_coulomb = 195.0 * 3600.0;
  b.ocv_v_by_soc = Curve1D{{0.0, 320.0}, {1.0, 400.0}};
  b.resistance_ohm_by_temp_c = Curve1D{{-20.0, 0.12}, {-10.0, 0.095}, {0.0, 0.075},
                                       {10.0, 0.06},  {25.0, 0.05},   {45.0, 0.04}};
  b.heat_capacity_j_per_k = 375000.0;
  b.soc_min = 0.05;
  b.soc_max = 1.0;
  b.tb_min_c = -30.0;
  b.tb_max_c = 40.0;
  b.dchg_limit_w = default_dchg_limit_w();
  b.chg_limit_w = default_chg_limit_w();
  return b;
}

inline ThermalActuators default_actuators() {
  ThermalActuators a;
  a.hvch_max_w = 7000.0;
  a.hvac_max_w = 3000.0;
  a.hp_max_w = 3000.0;
  a.eta_hvch = 0.87;
  a.eta_hvac = 2.0;
  a.cop_by_temp_c = Curve1D{{-20.0, 1.5}, {0.0, 2.5}, {25.0, 3.5}};
  a.ed_loss_fraction = 0.08;
  a.exch_coeff_base_w_per_k = 20.0;
  a.exch_coeff_speed_w_s_per_k_m = 1.0;
  return a;
}

inline CabinModel default_cabin() {
  CabinModel c;
  c.set_point_c = 20.0;
  c.conductance_w_per_k = 100.0;
  c.aux_power_w = 500.0;
  return c;
}

}  // namespace bevopt
