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
#include <cstdio>
#include <filesystem>

#include "bevopt/io.hpp"
#include "test_helpers.hpp"

using namespace bevopt;
using bevopt::testing::data_path;

TEST_CASE("io: shipped default parameters mirror the built-in defaults") {
  const auto p = io::load_parameters(data_path("default_params.json"));
  const BatteryParams ref = default_battery();
  CHECK(p.battery.capacity_coulomb == Approx(ref.capacity_coulomb));
  CHECK(p.battery.heat_capacity_j_per_k == Approx(ref.heat_capacity_j_per_k));
  CHECK(p.battery.ocv_v_by_soc(0.5) == Approx(ocv(ref, 0.5)));
  CHECK(p.battery.resistance_ohm_by_temp_c(35.0) == Approx(0.045));
  for (double soc : {0.0, 0.33, 0.71, 1.0})
    for (double tb : {-20.0, -4.0, 12.0, 40.0}) {
      CHECK(p.battery.dchg_limit_w(soc, tb) == Approx(ref.dchg_limit_w(soc, tb)));
      CHECK(p.battery.chg_limit_w(soc, tb) == Approx(ref.chg_limit_w(soc, tb)));
    }
  CHECK(p.actuators.eta_hvch == Approx(0.87));
  CHECK(p.actuators.hp_max_w == Approx(3000.0));
  CHECK(p.cabin.aux_power_w == Approx(500.0));
}

TEST_CASE("io: scenario file loads with sites sorted and params resolved") {
  const Scenario sc = io::load_scenario(data_path("reference_scenario.json"));
  CHECK(sc.sites.size() == 3);
  CHECK(sc.sites[0].s_m == Approx(120000.0));
  CHECK(sc.sites[2].s_m == Approx(320000.0));
  CHECK(sc.route_length_m() == Approx(400000.0));
  CHECK(sc.t_amb_c == Approx(-10.0));
  CHECK(sc.soc0 == Approx(0.9));
  CHECK(sc.sites[0].energy_price_per_kwh == Approx(8.7));
}

TEST_CASE("io: sweep scenario applies overrides") {
  const Scenario sc = io::load_scenario(data_path("sweep_scenario.json"));
  CHECK(sc.battery.soc_min == Approx(0.03));
}

TEST_CASE("io: zeta strings round-trip") {
  const std::vector<std::uint8_t> zeta = {1, 0, 1};
  CHECK(io::zeta_string(zeta) == "101");
  CHECK(io::parse_zeta("101") == zeta);
  CHECK_THROWS_AS(io::parse_zeta("10x"), std::runtime_error);
}

TEST_CASE("io: solution directory round trip preserves the trajectory") {
  const Scenario sc = bevopt::testing::toy_scenario({16000.0});
  const std::vector<std::uint8_t> zeta = {1};
  const auto grid = bevopt::testing::toy_grid();
  const auto t = ocp::build(sc, zeta, grid);
  // Synthetic but structured vector.
  std::vector<double> z(static_cast<std::size_t>(t.n_vars()));
  for (std::size_t i = 0; i < z.size(); ++i)
    z[i] = t.lower()[i] + 0.37 * (t.upper()[i] - t.lower()[i]);
  plan::PlanResult result;
  result.feasible = true;
  result.zeta = zeta;
  result.trajectory = t.unpack(z);
  result.total_cost = t.objective(z);
  result.charged_energy_kwh = result.trajectory.charged_energy_kwh;
  result.combined_time_s = result.trajectory.combined_time_s;
  result.kkt_residual = 1e-7;
  plan::CombinationOutcome oc;
  oc.zeta = zeta;
  oc.prescreen_passed = true;
  oc.status = nlp::SolveStatus::converged;
  oc.cost = result.total_cost;
  result.log.push_back(oc);

  const auto dir = std::filesystem::temp_directory_path() / "bevopt_io_test";
  std::filesystem::remove_all(dir);
  io::write_solution(dir, result, grid);
  REQUIRE(std::filesystem::exists(dir / "summary.json"));

  const auto back = io::read_solution(dir, sc);
  REQUIRE(back.phases.size() == result.trajectory.phases.size());
  for (std::size_t p = 0; p < back.phases.size(); ++p) {
    const auto& a = result.trajectory.phases[p];
    const auto& b = back.phases[p];
    REQUIRE(a.node.size() == b.node.size());
    for (std::size_t k = 0; k < a.node.size(); ++k) {
      CHECK(b.soc[k] == Approx(a.soc[k]).epsilon(1e-10));
      CHECK(b.tb_c[k] == Approx(a.tb_c[k]).epsilon(1e-10));
      CHECK(b.p_grid_w[k] == Approx(a.p_grid_w[k]).epsilon(1e-10));
    }
    CHECK(b.t_chg_s == Approx(a.t_chg_s).epsilon(1e-10));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("io: sweep CSV shapes") {
  std::vector<plan::ParetoPoint> pts(2);
  pts[0].time_price_per_h = 0.0;
  pts[0].converged = true;
  pts[0].zeta = {1, 0};
  pts[0].n_stops = 1;
  pts[1].time_price_per_h = 40.0;
  pts[1].converged = false;
  const std::string csv = io::pareto_csv(pts);
  CHECK(csv.find("c_t_per_h,combined_time_s,charged_energy_kwh,total_cost,zeta,n_stops,status") ==
        0);
  CHECK(csv.find("failed") != std::string::npos);
  CHECK(csv.find("10,") != std::string::npos);  // zeta string

  std::vector<plan::AmbientCell> cells(1);
  cells[0].t_amb_c = -10.0;
  cells[0].hp_max_w = 3000.0;
  cells[0].converged = true;
  cells[0].charged_energy_kwh = 50.0;
  cells[0].n_stops = 2;
  cells[0].reduction_pct = 12.5;
  const std::string acsv = io::ambient_csv(cells);
  CHECK(acsv.find("t_amb_c,hp_max_w,charged_energy_kwh,n_stops,reduction_pct,status") == 0);
  CHECK(acsv.find("12.5,converged") != std::string::npos);
}
