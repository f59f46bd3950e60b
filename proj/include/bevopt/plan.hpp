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

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "bevopt/model.hpp"
#include "bevopt/nlp.hpp"
#include "bevopt/ocp.hpp"
#include "bevopt/route.hpp"

namespace bevopt::plan {

struct PlanOptions {
  ocp::GridOptions grid;
  nlp::SolveOptions solver;
  int jobs = 2;
};

struct CombinationOutcome {
  std::vector<std::uint8_t> zeta;
  bool prescreen_passed = false;
  nlp::SolveStatus status = nlp::SolveStatus::infeasible;
  double cost = std::numeric_limits<double>::infinity();
  double kkt = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int outer_iterations = 0;
};

struct PlanResult {
  bool feasible = false;
  std::vector<std::uint8_t> zeta;
  ocp::Trajectory trajectory;
  double total_cost = 0.0;
  double charged_energy_kwh = 0.0;
  double combined_time_s = 0.0;
  double kkt_residual = std::numeric_limits<double>::infinity();
  std::vector<CombinationOutcome> log;  // one entry per combination, mask order
  std::vector<double> best_z;           // scaled solution of the winning combination
};

// Per-combination knowledge shared across neighboring scenarios with
// identical geometry, grids, and actuator limits (same variable layout and
// scaling): converged solutions for warm starting, and infeasibility
// verdicts, which transfer because the cost coefficients never enter the
// constraints.
struct WarmCache {
  std::vector<std::optional<std::vector<double>>> warm;
  std::vector<std::uint8_t> warm_converged;
  std::vector<std::uint8_t> infeasible;
  void ensure(std::size_t n_combinations) {
    if (warm.size() != n_combinations) {
      warm.assign(n_combinations, std::nullopt);
      warm_converged.assign(n_combinations, 0);
      infeasible.assign(n_combinations, 0);
    }
  }
};

namespace detail {

// Battery energy between two soc levels via the trapezoid of the OCV curve
// (exact for the piecewise-linear default), in Wh.
inline double battery_energy_wh(const BatteryParams& b, double from_soc, double to_soc) {
  const double u = 0.5 * (ocv(b, from_soc) + ocv(b, to_soc));
  return b.capacity_coulomb * u * (from_soc - to_soc) / 3600.0;
}

// Minimum-consumption oracle for one leg: propulsion (no regen credit) plus
// auxiliary load, no thermal demand. Wh.
inline double leg_consumption_wh(std::span<const RouteSample> cycle, double a, double b,
                                 double aux_w) {
  double joules = 0.0;
  for (std::size_t i = 0; i + 1 < cycle.size(); ++i) {
    const double lo = std::max(cycle[i].s_m, a);
    const double hi = std::min(cycle[i + 1].s_m, b);
    if (hi <= lo) continue;
    const double fa = max0(cycle_prop_at(cycle, lo)) / cycle_speed_at(cycle, lo);
    const double fb = max0(cycle_prop_at(cycle, hi)) / cycle_speed_at(cycle, hi);
    joules += 0.5 * (fa + fb) * (hi - lo);
  }
  joules += aux_w * trip_time(cycle, a, b);
  return joules / 3600.0;
}

inline std::vector<std::uint8_t> mask_to_zeta(std::uint32_t mask, std::size_t n) {
  std::vector<std::uint8_t> zeta(n, 0);
  for (std::size_t i = 0; i < n; ++i) zeta[i] = (mask >> i) & 1u;
  return zeta;
}

inline int count_stops(std::span<const std::uint8_t> zeta) {
  int n = 0;
  for (auto z : zeta) n += z ? 1 : 0;
  return n;
}

}  // namespace detail

// Conservative energy-balance pre-screen: optimistic battery range (highest
// OCV for consumption, lowest for charge gains, full rated charger energy).
// Never rejects a combination the NLP could satisfy, since thermal loads only
// add consumption.
inline bool feasibility_prescreen(const Scenario& scenario, std::span<const std::uint8_t> zeta) {
  const auto& b = scenario.battery;
  const double u_hi = b.ocv_v_by_soc.max_value();
  const double u_lo = b.ocv_v_by_soc.min_value();
  const double cap = b.capacity_coulomb;

  std::vector<std::size_t> stops;
  for (std::size_t i = 0; i < zeta.size(); ++i)
    if (zeta[i]) stops.push_back(i);

  double soc = scenario.soc0;
  double leg_start = scenario.cycle.front().s_m;
  for (std::size_t k = 0; k <= stops.size(); ++k) {
    const bool last = k == stops.size();
    const double leg_end = last ? scenario.route_length_m() : scenario.sites[stops[k]].s_m;
    const double need_wh =
        detail::leg_consumption_wh(scenario.cycle, leg_start, leg_end, scenario.cabin.aux_power_w);
    soc -= need_wh * 3600.0 / (cap * u_hi);
    const double floor = last ? std::max(b.soc_min, scenario.socf) : b.soc_min;
    if (soc < floor - 1e-9) return false;
    if (!last) {
      const ChargerSite& site = scenario.sites[stops[k]];
      soc -= site.detour_energy_wh * 3600.0 / (cap * u_hi);
      if (soc < b.soc_min - 1e-9) return false;
      const double gain_wh = site.p_grid_max_w * scenario.t_chg_max_s / 3600.0;
      soc = std::min(soc + gain_wh * 3600.0 / (cap * u_lo), b.soc_max);
      leg_start = leg_end;
    }
  }
  return true;
}

namespace detail {

// Initial iterate: linear soc drain with energy-balance-sized jumps at the
// active stops, battery temperature relaxing toward 25 C, mid-range controls,
// and p_b from the power balance.
inline std::vector<double> heuristic_start(const ocp::TranscribedNLP& t) {
  const Scenario& sc = t.scenario();
  const auto& bat = sc.battery;
  const auto& act = sc.actuators;
  const auto& cab = sc.cabin;
  const auto& grids = t.grids();

  const int n_act = t.n_active_sites();
  double total_need = 0.0;
  for (const auto& g : grids)
    if (g.kind == ocp::PhaseKind::drive)
      total_need +=
          leg_consumption_wh(sc.cycle, g.nodes.front(), g.nodes.back(), cab.aux_power_w);
  double deficit = total_need - battery_energy_wh(bat, sc.soc0, std::max(sc.socf, bat.soc_min));
  for (std::size_t i = 0; i < sc.sites.size(); ++i)
    if (t.zeta()[i]) deficit += sc.sites[i].detour_energy_wh;
  deficit = std::max(deficit, 0.0);

  std::vector<double> stop_energy_wh(sc.sites.size(), 0.0);
  std::vector<double> stop_tchg(sc.sites.size(), 0.0);
  if (n_act > 0) {
    for (std::size_t i = 0; i < sc.sites.size(); ++i) {
      if (!t.zeta()[i]) continue;
      const double cap_stop =
          std::min(sc.sites[i].p_grid_max_w * sc.t_chg_max_s / 3600.0 * 0.9,
                   battery_energy_wh(bat, bat.soc_max, bat.soc_min));
      stop_energy_wh[i] = std::min(deficit / n_act, cap_stop);
      stop_tchg[i] = std::clamp(stop_energy_wh[i] * 3600.0 / (0.6 * sc.sites[i].p_grid_max_w),
                                60.0, sc.t_chg_max_s);
    }
  }

  const double u_mid = ocv(bat, 0.5 * (bat.soc_min + bat.soc_max));
  const double cap_wh = bat.capacity_coulomb * u_mid / 3600.0;
  const double tb_target = std::clamp(25.0, bat.tb_min_c + 1.0, bat.tb_max_c - 1.0);

  std::vector<double> z(static_cast<std::size_t>(t.n_vars()), 0.0);
  auto set = [&](int p, int k, int comp, double physical) {
    z[static_cast<std::size_t>(t.var(p, k, comp))] = physical / t.comp_scale(comp);
  };

  double soc = sc.soc0;
  double clock = 0.0;
  for (std::size_t p = 0; p < grids.size(); ++p) {
    const ocp::PhaseGrid& g = grids[p];
    const int n = static_cast<int>(g.nodes.size());
    const bool drive = g.kind == ocp::PhaseKind::drive;
    const double t_chg = drive ? 0.0 : stop_tchg[static_cast<std::size_t>(g.site_index)];
    const double soc_gain =
        drive ? 0.0 : stop_energy_wh[static_cast<std::size_t>(g.site_index)] / cap_wh;
    for (int k = 0; k < n; ++k) {
      double node_soc;
      if (drive) {
        if (k > 0) {
          const double dwh = leg_consumption_wh(sc.cycle, g.nodes[static_cast<std::size_t>(k) - 1],
                                                g.nodes[static_cast<std::size_t>(k)],
                                                cab.aux_power_w);
          soc -= dwh / cap_wh;
          clock += trip_time(sc.cycle, g.nodes[static_cast<std::size_t>(k) - 1],
                             g.nodes[static_cast<std::size_t>(k)]);
        }
        node_soc = soc;
      } else {
        node_soc = soc + soc_gain * g.nodes[static_cast<std::size_t>(k)];
        if (k == n - 1) {
          soc = node_soc;
          clock += t_chg;
        }
      }
      node_soc = std::clamp(node_soc, bat.soc_min + 0.01, bat.soc_max - 0.005);
      const double tb =
          tb_target + (sc.tb0_c - tb_target) * std::exp(-clock / 7200.0);
      const double hvch = 0.5 * act.hvch_max_w;
      const double hvac = 0.5 * act.hvac_max_w;
      const double hp = 0.5 * act.hp_max_w;
      const double grid_p =
          drive ? 0.0 : 0.5 * sc.sites[static_cast<std::size_t>(g.site_index)].p_grid_max_w;
      const double prop = drive ? g.p_prop_w[static_cast<std::size_t>(k)] : 0.0;
      // Power balance fixed point for p_b (two corrections for the Joule term).
      const double base = prop + hvch + hvac + hp +
                          hvch_cabin_power(act, cab, sc.t_amb_c, tb, hp) + cab.aux_power_w -
                          grid_p;
      const double u = ocv(bat, node_soc);
      double pb = base;
      for (int it = 0; it < 2; ++it)
        pb = base + resistance(bat, tb) * pb * pb / (u * u);
      set(static_cast<int>(p), k, 0, node_soc);
      set(static_cast<int>(p), k, 1, tb);
      set(static_cast<int>(p), k, 2, hvch);
      set(static_cast<int>(p), k, 3, hvac);
      set(static_cast<int>(p), k, 4, hp);
      set(static_cast<int>(p), k, 5, grid_p);
      set(static_cast<int>(p), k, 6, pb);
    }
    if (!drive)
      z[static_cast<std::size_t>(t.tchg_var(static_cast<int>(p)))] = t_chg / t.tchg_scale();
  }
  for (std::size_t i = 0; i < z.size(); ++i)
    z[i] = std::clamp(z[i], t.lower()[i], t.upper()[i]);
  return z;
}

struct CombinationSolution {
  CombinationOutcome outcome;
  std::vector<double> z;  // scaled solution when converged
};

inline CombinationSolution solve_combination(const Scenario& scenario,
                                             std::vector<std::uint8_t> zeta,
                                             const PlanOptions& opt,
                                             const std::vector<double>* warm) {
  CombinationSolution out;
  out.outcome.zeta = zeta;
  out.outcome.prescreen_passed = feasibility_prescreen(scenario, zeta);
  if (!out.outcome.prescreen_passed) {
    out.outcome.status = nlp::SolveStatus::infeasible;
    return out;
  }
  const ocp::TranscribedNLP t = ocp::build(scenario, zeta, opt.grid);
  const nlp::NlpProblem problem = t.as_nlp();
  std::vector<std::vector<double>> starts;
  starts.push_back(heuristic_start(t));
  if (warm && static_cast<int>(warm->size()) == t.n_vars()) starts.push_back(*warm);

  bool have = false;
  nlp::SolveReport best;
  for (const auto& z0 : starts) {
    nlp::SolveReport rep = nlp::solve(problem, z0, opt.solver);
    const bool better =
        !have ||
        (rep.status == nlp::SolveStatus::converged &&
         (best.status != nlp::SolveStatus::converged || rep.f_star < best.f_star)) ||
        (rep.status != nlp::SolveStatus::converged &&
         best.status != nlp::SolveStatus::converged && rep.feasibility < best.feasibility);
    if (better) {
      best = std::move(rep);
      have = true;
    }
  }
  out.outcome.status = best.status;
  out.outcome.kkt = best.kkt_residual;
  out.outcome.iterations = best.iterations;
  out.outcome.outer_iterations = best.outer_iterations;
  if (best.status == nlp::SolveStatus::converged) out.outcome.cost = best.f_star;
  out.z = std::move(best.z_star);  // best iterate even when not converged
  return out;
}

// Deterministic worker pool: tasks claimed by atomic index, results merged by
// index regardless of completion order.
template <class Fn>
void run_indexed(int n_tasks, int jobs, Fn&& fn) {
  const int workers = std::max(1, std::min(jobs, n_tasks));
  if (workers == 1) {
    for (int i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n_tasks; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

// Enumerates all 2^N charger combinations (prescreen-filtered), solves each
// smooth subproblem, and returns the minimum-cost converged plan. This
// enumeration is the brute-force oracle for the binary layer.
inline PlanResult solve_scenario(const Scenario& scenario, const PlanOptions& opt = {},
                                 WarmCache* cache = nullptr,
                                 std::optional<std::vector<std::uint8_t>> forced_zeta = {}) {
  scenario.validate();
  const std::size_t n_sites = scenario.sites.size();
  const std::uint32_t n_comb = forced_zeta ? 1u : (1u << n_sites);
  if (cache) cache->ensure(1u << n_sites);

  std::vector<detail::CombinationSolution> solutions(n_comb);
  detail::run_indexed(static_cast<int>(n_comb), opt.jobs, [&](int i) {
    const std::vector<std::uint8_t> zeta =
        forced_zeta ? *forced_zeta : detail::mask_to_zeta(static_cast<std::uint32_t>(i), n_sites);
    std::uint32_t mask = 0;
    for (std::size_t b = 0; b < zeta.size(); ++b) mask |= zeta[b] ? (1u << b) : 0u;
    if (cache && cache->infeasible[mask]) {
      detail::CombinationSolution& out = solutions[static_cast<std::size_t>(i)];
      out.outcome.zeta = zeta;
      out.outcome.prescreen_passed = true;
      out.outcome.status = nlp::SolveStatus::infeasible;  // verdict carried over
      return;
    }
    const std::vector<double>* warm =
        cache && cache->warm[mask] ? &cache->warm[mask].value() : nullptr;
    solutions[static_cast<std::size_t>(i)] =
        detail::solve_combination(scenario, zeta, opt, warm);
  });

  PlanResult result;
  int best = -1;
  for (std::size_t i = 0; i < solutions.size(); ++i) {
    result.log.push_back(solutions[i].outcome);
    if (solutions[i].outcome.status == nlp::SolveStatus::converged &&
        (best < 0 || solutions[i].outcome.cost < result.log[static_cast<std::size_t>(best)].cost))
      best = static_cast<int>(i);
    if (cache) {
      std::uint32_t mask = 0;
      for (std::size_t b = 0; b < solutions[i].outcome.zeta.size(); ++b)
        mask |= solutions[i].outcome.zeta[b] ? (1u << b) : 0u;
      if (solutions[i].outcome.status == nlp::SolveStatus::converged) {
        cache->warm[mask] = solutions[i].z;
        cache->warm_converged[mask] = 1;
      } else if (solutions[i].outcome.status == nlp::SolveStatus::infeasible &&
                 solutions[i].outcome.iterations > 0) {
        cache->infeasible[mask] = 1;
      } else if (!solutions[i].z.empty() && !cache->warm_converged[mask]) {
        cache->warm[mask] = solutions[i].z;  // best effort for the next neighbor
      }
    }
  }
  if (best < 0) return result;  // infeasible: log carries per-combination diagnostics

  const detail::CombinationSolution& win = solutions[static_cast<std::size_t>(best)];
  result.feasible = true;
  result.zeta = win.outcome.zeta;
  result.total_cost = win.outcome.cost;
  result.kkt_residual = win.outcome.kkt;
  result.best_z = win.z;
  const ocp::TranscribedNLP t = ocp::build(scenario, result.zeta, opt.grid);
  result.trajectory = t.unpack(win.z);
  result.charged_energy_kwh = result.trajectory.charged_energy_kwh;
  result.combined_time_s = result.trajectory.combined_time_s;
  return result;
}

struct ParetoPoint {
  double time_price_per_h = 0.0;
  bool converged = false;
  double combined_time_s = 0.0;
  double charged_energy_kwh = 0.0;
  double total_cost = 0.0;
  std::vector<std::uint8_t> zeta;
  int n_stops = 0;
};

// One solve per time price, ascending; each point also warm-starts from its
// lower neighbor's per-combination solutions and keeps the better outcome.
inline std::vector<ParetoPoint> pareto_sweep(const Scenario& scenario,
                                             std::span<const double> prices,
                                             const PlanOptions& opt = {},
                                             std::vector<PlanResult>* full = nullptr) {
  if (prices.size() < 2) throw std::invalid_argument("pareto_sweep: need at least 2 prices");
  for (std::size_t i = 1; i < prices.size(); ++i)
    if (!(prices[i] > prices[i - 1]))
      throw std::invalid_argument("pareto_sweep: prices must be sorted ascending");

  std::vector<ParetoPoint> points;
  WarmCache cache;
  for (double price : prices) {
    Scenario sc = scenario;
    sc.time_price_per_h = price;
    PlanResult r = solve_scenario(sc, opt, &cache);
    ParetoPoint pt;
    pt.time_price_per_h = price;
    pt.converged = r.feasible;
    if (r.feasible) {
      pt.combined_time_s = r.combined_time_s;
      pt.charged_energy_kwh = r.charged_energy_kwh;
      pt.total_cost = r.total_cost;
      pt.zeta = r.zeta;
      pt.n_stops = detail::count_stops(r.zeta);
    }
    points.push_back(pt);
    if (full) full->push_back(std::move(r));
  }
  return points;
}

struct AmbientCell {
  double t_amb_c = 0.0;
  double hp_max_w = 0.0;
  bool converged = false;
  double charged_energy_kwh = 0.0;
  int n_stops = 0;
  double reduction_pct = std::numeric_limits<double>::quiet_NaN();
  double total_cost = 0.0;
};

// Grid of solves over (ambient temperature x HP power limit) at the
// scenario's fixed time price; tb0 follows the ambient soak assumption.
// reduction_pct compares against the hp = 0 column of the same temperature.
inline std::vector<AmbientCell> ambient_sweep(const Scenario& scenario,
                                              std::span<const double> ambients,
                                              std::span<const double> hp_limits,
                                              const PlanOptions& opt = {}) {
  if (ambients.empty() || hp_limits.empty())
    throw std::invalid_argument("ambient_sweep: empty sweep list");
  std::vector<AmbientCell> cells;
  std::vector<WarmCache> caches(hp_limits.size());
  for (double t_amb : ambients) {
    for (std::size_t h = 0; h < hp_limits.size(); ++h) {
      Scenario sc = scenario;
      sc.t_amb_c = t_amb;
      sc.tb0_c = t_amb;
      sc.actuators.hp_max_w = hp_limits[h];
      PlanResult r = solve_scenario(sc, opt, &caches[h]);
      AmbientCell cell;
      cell.t_amb_c = t_amb;
      cell.hp_max_w = hp_limits[h];
      cell.converged = r.feasible;
      if (r.feasible) {
        cell.charged_energy_kwh = r.charged_energy_kwh;
        cell.n_stops = detail::count_stops(r.zeta);
        cell.total_cost = r.total_cost;
      }
      cells.push_back(cell);
    }
  }
  // Reduction relative to the HP-disabled column.
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!cells[i].converged) continue;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (cells[j].t_amb_c == cells[i].t_amb_c && cells[j].hp_max_w == 0.0 && cells[j].converged) {
        cells[i].reduction_pct =
            100.0 * (1.0 - cells[i].charged_energy_kwh / cells[j].charged_energy_kwh);
        break;
      }
    }
  }
  return cells;
}

}  // namespace bevopt::plan
