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
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bevopt/route.hpp"

using namespace bevopt;

namespace {

Scenario make_scenario(double length_m, std::vector<double> site_positions) {
  Scenario sc;
  sc.cycle = {{0.0, 20.0, 30000.0}, {length_m, 20.0, 30000.0}};
  for (double s : site_positions) {
    ChargerSite site;
    site.s_m = s;
    site.p_grid_max_w = 200000.0;
    site.energy_price_per_kwh = 8.7;
    site.detour_time_s = 300.0;
    site.detour_energy_wh = 450.0;
    sc.sites.push_back(site);
  }
  sc.t_amb_c = 20.0;
  sc.tb0_c = 20.0;
  sc.battery = default_battery();
  sc.actuators = default_actuators();
  sc.cabin = default_cabin();
  return sc;
}

std::string data_file(const char* name) {
  return std::string(BEVOPT_DATA_DIR) + "/" + name;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("load_drive_cycle parses a flat two-row file") {
  const auto cycle = load_drive_cycle("s_m,v_mps,p_prop_w\n0,20,30000\n400000,20,30000\n");
  REQUIRE(cycle.size() == 2);
  CHECK(cycle[0].s_m == 0.0);
  CHECK(cycle[1].s_m == 400000.0);
  CHECK(cycle[1].v_mps == 20.0);
  CHECK(cycle[1].p_prop_w == 30000.0);
}

TEST_CASE("load_drive_cycle reports the offending line") {
  CHECK_THROWS_WITH(load_drive_cycle("s_m,v_mps,p_prop_w\n0,20,1000\n100,0,1000\n"),
                    Catch::Contains("line 3") && Catch::Contains("speed"));
  CHECK_THROWS_WITH(load_drive_cycle("s_m,v_mps,p_prop_w\n100,20,0\n50,20,0\n"),
                    Catch::Contains("line 3") && Catch::Contains("increasing"));
  CHECK_THROWS_WITH(load_drive_cycle("s_m,v_mps,p_prop_w\n0,20\n"), Catch::Contains("line 2"));
  CHECK_THROWS_WITH(load_drive_cycle("distance,speed,power\n0,20,0\n"),
                    Catch::Contains("header"));
  CHECK_THROWS_AS(load_drive_cycle("s_m,v_mps,p_prop_w\n0,2e,30\n"), CycleParseError);
}

TEST_CASE("load_drive_cycle accepts CRLF") {
  const auto cycle = load_drive_cycle("s_m,v_mps,p_prop_w\r\n0,20,1\r\n10,21,2\r\n");
  REQUIRE(cycle.size() == 2);
  CHECK(cycle[1].v_mps == 21.0);
}

TEST_CASE("resample_uniform keeps constants and hits the exact end") {
  const auto cycle = load_drive_cycle("s_m,v_mps,p_prop_w\n0,20,30000\n400000,20,30000\n");
  const auto fine = resample_uniform(cycle, 4000.0);
  CHECK(fine.size() == 101);  // 400 km / 4 km + 1
  CHECK(fine.back().s_m == 400000.0);
  for (const auto& s : fine) {
    CHECK(s.v_mps == Approx(20.0));
    CHECK(s.p_prop_w == Approx(30000.0));
  }
}

TEST_CASE("resample_uniform midpoint is the neighbor mean for linear data") {
  std::vector<RouteSample> cycle = {{0.0, 10.0, 0.0}, {1000.0, 30.0, 2000.0}};
  const auto out = resample_uniform(cycle, 500.0);
  REQUIRE(out.size() == 3);
  CHECK(out[1].v_mps == Approx(0.5 * (10.0 + 30.0)));
  CHECK(out[1].p_prop_w == Approx(1000.0));
}

TEST_CASE("trip_time quadrature oracles") {
  const auto flat = load_drive_cycle("s_m,v_mps,p_prop_w\n0,20,0\n400000,20,0\n");
  CHECK(trip_time(flat, 0.0, 400000.0) == Approx(20000.0).epsilon(1e-12));
  CHECK(trip_time(flat, 12345.0, 12345.0) == 0.0);
  // Trapezoid of 1/v on the sample knots: 1000*(1/10+1/30)/2 = 66.67 s.
  std::vector<RouteSample> ramp = {{0.0, 10.0, 0.0}, {1000.0, 30.0, 0.0}};
  CHECK(trip_time(ramp, 0.0, 1000.0) == Approx(1000.0 * (0.1 + 1.0 / 30.0) / 2.0).epsilon(1e-12));
  CHECK_THROWS_AS(trip_time(flat, -1.0, 10.0), std::out_of_range);
  CHECK_THROWS_AS(trip_time(flat, 0.0, 400001.0), std::out_of_range);
}

TEST_CASE("split_phases alternates drive and charge slots") {
  const auto phases3 = split_phases(make_scenario(400000.0, {120000.0, 220000.0, 320000.0}));
  REQUIRE(phases3.size() == 7);  // N_chg = 3
  CHECK(phases3[0].kind == Phase::Kind::drive);
  CHECK(phases3[1].kind == Phase::Kind::charge);
  CHECK(phases3[1].site_index == 0);
  CHECK(phases3[6].s_to_m == 400000.0);

  const auto phases1 = split_phases(make_scenario(400000.0, {200000.0}));
  REQUIRE(phases1.size() == 3);

  CHECK_THROWS_AS(split_phases(make_scenario(400000.0, {0.0})), std::invalid_argument);
  CHECK_THROWS_AS(split_phases(make_scenario(400000.0, {500000.0})), std::invalid_argument);
}

TEST_CASE("split_phases preserves total distance") {
  const auto sc = make_scenario(400000.0, {90000.0, 260000.0});
  double total = 0.0;
  for (const auto& ph : split_phases(sc))
    if (ph.kind == Phase::Kind::drive) total += ph.s_to_m - ph.s_from_m;
  CHECK(total == Approx(400000.0).epsilon(1e-12));
}

TEST_CASE("resampling the shipped cycles changes full trip time by <= 0.5%") {
  for (const char* name : {"reference_cycle.csv", "sweep_cycle.csv", "flat_cycle.csv"}) {
    const auto cycle = load_drive_cycle(slurp(data_file(name)));
    const auto coarse = resample_uniform(cycle, 4000.0);
    const double t_raw = trip_time(cycle, 0.0, cycle.back().s_m);
    const double t_res = trip_time(coarse, 0.0, coarse.back().s_m);
    CHECK(std::abs(t_res - t_raw) / t_raw < 0.005);
  }
}
