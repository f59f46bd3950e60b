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
#include <random>

#include "bevopt/ocp.hpp"
#include "test_helpers.hpp"

using namespace bevopt;
using bevopt::testing::site_at;
using bevopt::testing::toy_grid;
using bevopt::testing::toy_scenario;

namespace {

// 392 km flat route with sites at 120 and 280 km: 31 + 41 + 29 = 101 driving
// nodes when split at the sites.
Scenario layout_scenario() {
  Scenario sc = toy_scenario({120000.0, 280000.0});
  sc.cycle = {{0.0, 20.0, 30000.0}, {392000.0, 20.0, 30000.0}};
  sc.soc0 = 0.9;
  sc.socf = 0.1;
  sc.t_chg_max_s = 5400.0;
  return sc;
}

std::vector<double> random_interior_point(const ocp::TranscribedNLP& t, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.15, 0.85);
  std::vector<double> z(static_cast<std::size_t>(t.n_vars()));
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double lo = t.lower()[i], hi = t.upper()[i];
    z[i] = lo + (hi > lo ? u(rng) * (hi - lo) : 0.0);
  }
  return z;
}

}  // namespace

TEST_CASE("transcription: variable layout arithmetic") {
  const Scenario sc = layout_scenario();
  ocp::GridOptions grid;  // ds 4 km, 20 tau intervals
  const std::vector<std::uint8_t> both = {1, 1};
  const auto t = ocp::build(sc, both, grid);
  int drive_nodes = 0, charge_nodes = 0;
  for (const auto& g : t.grids())
    (g.kind == ocp::PhaseKind::drive ? drive_nodes : charge_nodes) +=
        static_cast<int>(g.nodes.size());
  CHECK(drive_nodes == 101);
  CHECK(charge_nodes == 42);
  // states 2*(101+42) + controls 5*(101+42) + 2 charge-duration scalars
  CHECK(t.n_vars() == 1003);
}

TEST_CASE("transcription: all-skip combination has no free charge variables") {
  const Scenario sc = layout_scenario();
  const std::vector<std::uint8_t> none = {0, 0};
  const auto t = ocp::build(sc, none, toy_grid());
  for (const auto& g : t.grids()) CHECK(g.kind == ocp::PhaseKind::drive);
  for (std::size_t p = 0; p < t.grids().size(); ++p)
    CHECK(t.tchg_var(static_cast<int>(p)) == -1);
  // Pass-through: only 2 link rows per site.
  int expected_eq = 0;
  for (const auto& g : t.grids()) expected_eq += 2 * (static_cast<int>(g.nodes.size()) - 1);
  for (const auto& g : t.grids()) expected_eq += static_cast<int>(g.nodes.size());
  expected_eq += 2 * 2;
  CHECK(t.n_eq() == expected_eq);
}

TEST_CASE("transcription: defect rows vanish on an exact constant-rate rollout") {
  // With zero controls, zero propulsion, and ambient equal to battery
  // temperature, the dynamics are identically zero, so a constant state
  // satisfies every defect exactly.
  Scenario sc = toy_scenario({16000.0});
  sc.cycle = {{0.0, 20.0, 0.0}, {40000.0, 20.0, 0.0}};
  sc.cabin.aux_power_w = 0.0;
  sc.cabin.conductance_w_per_k = 0.0;
  const std::vector<std::uint8_t> zeta = {1};
  const auto t = ocp::build(sc, zeta, toy_grid());
  std::vector<double> z(static_cast<std::size_t>(t.n_vars()), 0.0);
  for (std::size_t p = 0; p < t.grids().size(); ++p)
    for (int k = 0; k < static_cast<int>(t.grids()[p].nodes.size()); ++k) {
      z[static_cast<std::size_t>(t.var(static_cast<int>(p), k, 0))] = sc.soc0;
      z[static_cast<std::size_t>(t.var(static_cast<int>(p), k, 1))] =
          sc.tb0_c / t.comp_scale(1);
    }
  std::vector<double> h(static_cast<std::size_t>(t.n_eq()));
  t.equalities(z, h);
  int row = 0;
  for (const auto& g : t.grids())
    for (int k = 0; k + 1 < static_cast<int>(g.nodes.size()); ++k) {
      CHECK(h[static_cast<std::size_t>(row++)] == Approx(0.0).margin(1e-14));
      CHECK(h[static_cast<std::size_t>(row++)] == Approx(0.0).margin(1e-14));
    }
}

TEST_CASE("objective: trapezoid energy and gated cost terms") {
  Scenario sc = layout_scenario();
  sc.time_price_per_h = 0.0;
  sc.detour_penalty = 0.0;
  ocp::GridOptions grid;
  const std::vector<std::uint8_t> both = {1, 1};
  const auto t = ocp::build(sc, both, grid);

  // One stop at constant 200 kW for 900 s: 50 kWh * 8.7 = 435.
  std::vector<double> z(static_cast<std::size_t>(t.n_vars()), 0.0);
  int charge_phase = -1;
  for (std::size_t p = 0; p < t.grids().size(); ++p)
    if (t.grids()[p].kind == ocp::PhaseKind::charge) {
      charge_phase = static_cast<int>(p);
      break;
    }
  REQUIRE(charge_phase >= 0);
  for (int k = 0; k < static_cast<int>(t.grids()[static_cast<std::size_t>(charge_phase)]
                                           .nodes.size());
       ++k)
    z[static_cast<std::size_t>(t.var(charge_phase, k, 5))] = 200000.0 / t.comp_scale(5);
  z[static_cast<std::size_t>(t.tchg_var(charge_phase))] = 900.0 / t.tchg_scale();
  CHECK(t.objective(z) == Approx(435.0).epsilon(1e-12));

  // Zero vector objective: no charging, no active-site constants.
  std::vector<double> zero(static_cast<std::size_t>(t.n_vars()), 0.0);
  CHECK(t.objective(zero) == 0.0);

  // Two active stops with only the detour penalty priced.
  Scenario sc2 = layout_scenario();
  sc2.time_price_per_h = 0.0;
  sc2.detour_penalty = 10.0;
  for (auto& s : sc2.sites) s.energy_price_per_kwh = 0.0;
  const auto t2 = ocp::build(sc2, both, grid);
  std::vector<double> zero2(static_cast<std::size_t>(t2.n_vars()), 0.0);
  CHECK(t2.objective(zero2) == Approx(20.0).epsilon(1e-12));
}

TEST_CASE("objective gradient matches finite differences") {
  const Scenario sc = layout_scenario();
  const std::vector<std::uint8_t> both = {1, 1};
  const auto t = ocp::build(sc, both, toy_grid());
  const auto z = random_interior_point(t, 42);
  std::vector<double> grad(static_cast<std::size_t>(t.n_vars()));
  t.objective_gradient(z, grad);
  std::vector<double> zp = z;
  const double h = 1e-6;
  for (int i : {t.var(1, 2, 5), t.tchg_var(1), t.var(0, 0, 6)}) {
    const std::size_t iu = static_cast<std::size_t>(i);
    zp[iu] = z[iu] + h;
    const double fp = t.objective(zp);
    zp[iu] = z[iu] - h;
    const double fm = t.objective(zp);
    zp[iu] = z[iu];
    CHECK(grad[iu] == Approx((fp - fm) / (2.0 * h)).margin(1e-7));
  }
}

TEST_CASE("unpack/pack round trip is exact") {
  const Scenario sc = toy_scenario({16000.0});
  const std::vector<std::uint8_t> zeta = {1};
  const auto t = ocp::build(sc, zeta, toy_grid());
  const auto z = random_interior_point(t, 7);
  const auto traj = t.unpack(z);
  const auto z2 = t.pack(traj);
  REQUIRE(z2.size() == z.size());
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z2[i] == Approx(z[i]).margin(1e-15));
  std::vector<double> wrong(z.size() + 1, 0.0);
  CHECK_THROWS_AS(t.unpack(wrong), std::invalid_argument);
}

TEST_CASE("unpack: zero vector gives zero controls and zero costs") {
  const Scenario sc = toy_scenario({16000.0});
  const std::vector<std::uint8_t> zeta = {1};
  const auto t = ocp::build(sc, zeta, toy_grid());
  const std::vector<double> z(static_cast<std::size_t>(t.n_vars()), 0.0);
  const auto traj = t.unpack(z);
  for (const auto& ph : traj.phases)
    for (std::size_t k = 0; k < ph.node.size(); ++k) {
      CHECK(ph.p_grid_w[k] == 0.0);
      CHECK(ph.p_b_w[k] == 0.0);
      CHECK(ph.p_hvch_b_w[k] == 0.0);
    }
  CHECK(traj.charged_energy_kwh == 0.0);
}

TEST_CASE("unpack: cost breakdown equals the objective when c_occ = 0") {
  const Scenario sc = layout_scenario();
  const std::vector<std::uint8_t> both = {1, 1};
  const auto t = ocp::build(sc, both, toy_grid());
  const auto z = random_interior_point(t, 99);
  const auto traj = t.unpack(z);
  const double obj = t.objective(z);
  CHECK(traj.cost.total() == Approx(obj).epsilon(1e-9));
}

TEST_CASE("objective ignores inactive-site attributes") {
  Scenario a = layout_scenario();
  Scenario b = layout_scenario();
  // Perturb the skipped site's prices only.
  b.sites[1].energy_price_per_kwh = 99.0;
  b.sites[1].occupancy_price_per_min = 77.0;
  const std::vector<std::uint8_t> first_only = {1, 0};
  const auto ta = ocp::build(a, first_only, toy_grid());
  const auto tb = ocp::build(b, first_only, toy_grid());
  REQUIRE(ta.n_vars() == tb.n_vars());
  const auto z = random_interior_point(ta, 5);
  CHECK(ta.objective(z) == tb.objective(z));
}

TEST_CASE("transcription Jacobians agree with finite differences") {
  Scenario sc = toy_scenario({16000.0});
  sc.t_amb_c = -10.0;
  sc.tb0_c = -10.0;
  const std::vector<std::uint8_t> zeta = {1};
  const auto t = ocp::build(sc, zeta, toy_grid());
  const auto problem = t.as_nlp();
  for (unsigned seed : {1u, 2u, 3u}) {
    const auto z = random_interior_point(t, seed);
    const auto res = nlp::check_gradients(problem, z, 1e-6);
    CHECK(res.max_error <= 1e-5);
  }
}

TEST_CASE("RK4 transcription reproduces a linear-in-distance state exactly") {
  // Constant p_b with a constant-voltage battery makes dsoc/ds constant, which
  // RK4 integrates without error; the defect must vanish on the exact line.
  Scenario sc = toy_scenario({16000.0});
  sc.cycle = {{0.0, 20.0, 0.0}, {40000.0, 20.0, 0.0}};
  sc.battery.ocv_v_by_soc = Curve1D{{0.0, 360.0}, {1.0, 360.0}};
  sc.battery.resistance_ohm_by_temp_c = Curve1D{{-40.0, 0.0}, {60.0, 0.0}};
  sc.actuators.ed_loss_fraction = 0.0;
  sc.actuators.exch_coeff_base_w_per_k = 0.0;
  sc.actuators.exch_coeff_speed_w_s_per_k_m = 0.0;
  sc.cabin.conductance_w_per_k = 0.0;
  const std::vector<std::uint8_t> zeta = {0};
  const auto t = ocp::build(sc, zeta, toy_grid());

  const double pb = 7200.0;  // dsoc/ds = -pb/(C*U*v) = -7200/(702000*360*20)
  const double slope = -pb / (702000.0 * 360.0 * 20.0);
  std::vector<double> z(static_cast<std::size_t>(t.n_vars()), 0.0);
  for (std::size_t p = 0; p < t.grids().size(); ++p) {
    const auto& g = t.grids()[p];
    for (int k = 0; k < static_cast<int>(g.nodes.size()); ++k) {
      z[static_cast<std::size_t>(t.var(static_cast<int>(p), k, 0))] =
          sc.soc0 + slope * g.nodes[static_cast<std::size_t>(k)];
      z[static_cast<std::size_t>(t.var(static_cast<int>(p), k, 1))] =
          sc.tb0_c / t.comp_scale(1);
      z[static_cast<std::size_t>(t.var(static_cast<int>(p), k, 6))] = pb / t.comp_scale(6);
    }
  }
  std::vector<double> h(static_cast<std::size_t>(t.n_eq()));
  t.equalities(z, h);
  int row = 0;
  for (const auto& g : t.grids())
    for (int k = 0; k + 1 < static_cast<int>(g.nodes.size()); ++k) {
      CHECK(h[static_cast<std::size_t>(row++)] == Approx(0.0).margin(1e-12));
      CHECK(h[static_cast<std::size_t>(row++)] == Approx(0.0).margin(1e-12));
    }
}
