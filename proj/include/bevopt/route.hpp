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

#include <charconv>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bevopt/model.hpp"

namespace bevopt {

// One drive-cycle sample. Propulsion power includes driveline losses and may
// be negative while regenerating; speed stays positive because the vehicle
// only stops at chargers.
struct RouteSample {
  double s_m = 0.0;
  double v_mps = 0.0;
  double p_prop_w = 0.0;
};

struct ChargerSite {
  double s_m = 0.0;
  double p_grid_max_w = 0.0;
  double energy_price_per_kwh = 0.0;
  double occupancy_free_s = 0.0;
  double occupancy_price_per_min = 0.0;
  double detour_time_s = 0.0;
  double detour_energy_wh = 0.0;
};

struct Scenario {
  std::vector<RouteSample> cycle;
  std::vector<ChargerSite> sites;
  double t_amb_c = 0.0;
  double soc0 = 0.9;
  double socf = 0.1;
  double tb0_c = 0.0;
  double time_price_per_h = 0.0;   // c_t,chg
  double detour_penalty = 0.0;     // c_zeta per used charger
  double t_chg_max_s = 5400.0;
  BatteryParams battery;
  ThermalActuators actuators;
  CabinModel cabin;

  double route_length_m() const { return cycle.empty() ? 0.0 : cycle.back().s_m; }

  void validate() const {
    battery.validate();
    actuators.validate();
    cabin.validate();
    if (cycle.size() < 2) throw std::invalid_argument("scenario: drive cycle needs >= 2 samples");
    if (!(soc0 > socf)) throw std::invalid_argument("scenario: soc0 must exceed socf");
    if (sites.empty()) throw std::invalid_argument("scenario: at least one charger site required");
    if (!(t_chg_max_s > 0.0)) throw std::invalid_argument("scenario: t_chg_max must be > 0");
    const double end = route_length_m();
    double prev = 0.0;
    for (const auto& site : sites) {
      if (!(site.s_m > 0.0 && site.s_m < end))
        throw std::invalid_argument("scenario: charger must lie strictly inside the route");
      if (!(site.s_m > prev)) throw std::invalid_argument("scenario: chargers must be sorted");
      if (!(site.p_grid_max_w > 0.0))
        throw std::invalid_argument("scenario: charger rated power must be > 0");
      if (site.energy_price_per_kwh < 0.0 || site.occupancy_price_per_min < 0.0 ||
          site.detour_time_s < 0.0 || site.detour_energy_wh < 0.0 || site.occupancy_free_s < 0.0)
        throw std::invalid_argument("scenario: negative charger attribute");
      prev = site.s_m;
    }
  }
};

class CycleParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline bool parse_double(std::string_view token, double& out) {
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace detail

// Parses a `s_m,v_mps,p_prop_w` CSV document; accepts LF or CRLF endings.
inline std::vector<RouteSample> load_drive_cycle(std::string_view text) {
  std::vector<RouteSample> samples;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                           : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "s_m,v_mps,p_prop_w")
        throw CycleParseError("line 1: expected header 's_m,v_mps,p_prop_w'");
      header_seen = true;
      continue;
    }
    RouteSample s;
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos)
      throw CycleParseError("line " + std::to_string(line_no) + ": expected 3 comma-separated fields");
    if (!detail::parse_double(line.substr(0, c1), s.s_m) ||
        !detail::parse_double(line.substr(c1 + 1, c2 - c1 - 1), s.v_mps) ||
        !detail::parse_double(line.substr(c2 + 1), s.p_prop_w))
      throw CycleParseError("line " + std::to_string(line_no) + ": malformed number");
    if (!(s.v_mps > 0.0))
      throw CycleParseError("line " + std::to_string(line_no) + ": speed must be > 0");
    if (!samples.empty() && !(s.s_m > samples.back().s_m))
      throw CycleParseError("line " + std::to_string(line_no) +
                            ": distance column must be strictly increasing");
    samples.push_back(s);
  }
  if (!header_seen) throw CycleParseError("line 1: empty document");
  if (samples.size() < 2) throw CycleParseError("cycle needs at least 2 samples");
  return samples;
}

namespace detail {

inline double interp_channel(std::span<const RouteSample> cycle, double s,
                             double RouteSample::* field) {
  if (s <= cycle.front().s_m) return cycle.front().*field;
  if (s >= cycle.back().s_m) return cycle.back().*field;
  std::size_t lo = 0, hi = cycle.size() - 1;
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    (cycle[mid].s_m <= s ? lo : hi) = mid;
  }
  const double t = (s - cycle[lo].s_m) / (cycle[hi].s_m - cycle[lo].s_m);
  return cycle[lo].*field + t * (cycle[hi].*field - cycle[lo].*field);
}

}  // namespace detail

inline double cycle_speed_at(std::span<const RouteSample> cycle, double s_m) {
  return detail::interp_channel(cycle, s_m, &RouteSample::v_mps);
}

inline double cycle_prop_at(std::span<const RouteSample> cycle, double s_m) {
  return detail::interp_channel(cycle, s_m, &RouteSample::p_prop_w);
}

// Uniform resampling at ds with an exact final sample at the route end.
inline std::vector<RouteSample> resample_uniform(std::span<const RouteSample> cycle, double ds_m) {
  if (!(ds_m > 0.0)) throw std::invalid_argument("resample_uniform: ds must be > 0");
  const double end = cycle.back().s_m;
  std::vector<RouteSample> out;
  out.reserve(static_cast<std::size_t>(end / ds_m) + 2);
  for (double s = cycle.front().s_m;; s += ds_m) {
    if (s >= end - 1e-9) {
      out.push_back({end, cycle_speed_at(cycle, end), cycle_prop_at(cycle, end)});
      break;
    }
    out.push_back({s, cycle_speed_at(cycle, s), cycle_prop_at(cycle, s)});
  }
  return out;
}

// Trapezoidal integral of 1/v over the sample knots intersected with
// [s_from, s_to].
inline double trip_time(std::span<const RouteSample> cycle, double s_from_m, double s_to_m) {
  if (s_from_m > s_to_m || s_from_m < cycle.front().s_m - 1e-9 ||
      s_to_m > cycle.back().s_m + 1e-9)
    throw std::out_of_range("trip_time: query outside route");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cycle.size(); ++i) {
    const double a = std::max(cycle[i].s_m, s_from_m);
    const double b = std::min(cycle[i + 1].s_m, s_to_m);
    if (b <= a) continue;
    const double inv_a = 1.0 / cycle_speed_at(cycle, a);
    const double inv_b = 1.0 / cycle_speed_at(cycle, b);
    total += 0.5 * (inv_a + inv_b) * (b - a);
  }
  return total;
}

struct Phase {
  enum class Kind { drive, charge };
  Kind kind = Kind::drive;
  double s_from_m = 0.0;  // driving phases
  double s_to_m = 0.0;
  int site_index = -1;  // charging phases
};

// Alternating drive/charge phase list; every site yields a charge slot whose
// activation is decided later by zeta.
inline std::vector<Phase> split_phases(const Scenario& scenario) {
  scenario.validate();
  std::vector<Phase> phases;
  double cursor = scenario.cycle.front().s_m;
  for (std::size_t i = 0; i < scenario.sites.size(); ++i) {
    const double s = scenario.sites[i].s_m;
    phases.push_back({Phase::Kind::drive, cursor, s, -1});
    phases.push_back({Phase::Kind::charge, s, s, static_cast<int>(i)});
    cursor = s;
  }
  phases.push_back({Phase::Kind::drive, cursor, scenario.route_length_m(), -1});
  return phases;
}

}  // namespace bevopt
