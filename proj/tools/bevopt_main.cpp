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

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bevopt/io.hpp"
#include "bevopt/plan.hpp"
#include "bevopt/plant.hpp"

namespace {

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    const std::string tok =
        text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!tok.empty()) out.push_back(std::stod(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw std::runtime_error("empty numeric list: '" + text + "'");
  return out;
}

int run_solve(const std::string& scenario_path, const std::string& out_dir,
              const std::string& zeta_str, double ds_m, int tau_steps, int jobs) {
  const bevopt::Scenario scenario = bevopt::io::load_scenario(scenario_path);
  bevopt::plan::PlanOptions opt;
  opt.grid.ds_m = ds_m;
  opt.grid.tau_steps = tau_steps;
  opt.jobs = jobs;
  std::optional<std::vector<std::uint8_t>> forced;
  if (!zeta_str.empty()) {
    forced = bevopt::io::parse_zeta(zeta_str);
    if (forced->size() != scenario.sites.size())
      throw std::runtime_error("--zeta length must match the number of chargers");
  }
  const bevopt::plan::PlanResult result =
      bevopt::plan::solve_scenario(scenario, opt, nullptr, forced);
  bevopt::io::write_solution(out_dir, result, opt.grid);
  if (!result.feasible) {
    std::fprintf(stderr, "no combination converged; see %s/summary.json\n", out_dir.c_str());
    return 2;
  }
  std::printf("zeta=%s cost=%.6g charged=%.6g kWh combined_time=%.6g s\n",
              bevopt::io::zeta_string(result.zeta).c_str(), result.total_cost,
              result.charged_energy_kwh, result.combined_time_s);
  return 0;
}

int run_pareto(const std::string& scenario_path, const std::string& prices_str,
               const std::string& out_dir, int jobs) {
  const bevopt::Scenario scenario = bevopt::io::load_scenario(scenario_path);
  const std::vector<double> prices = parse_list(prices_str);
  bevopt::plan::PlanOptions opt;
  opt.jobs = jobs;
  std::vector<bevopt::plan::ParetoPoint> points;
  if (prices.size() == 1) {
    bevopt::Scenario sc = scenario;
    sc.time_price_per_h = prices[0];
    const auto r = bevopt::plan::solve_scenario(sc, opt);
    bevopt::plan::ParetoPoint pt;
    pt.time_price_per_h = prices[0];
    pt.converged = r.feasible;
    if (r.feasible) {
      pt.combined_time_s = r.combined_time_s;
      pt.charged_energy_kwh = r.charged_energy_kwh;
      pt.total_cost = r.total_cost;
      pt.zeta = r.zeta;
      for (auto z : r.zeta) pt.n_stops += z ? 1 : 0;
    }
    points.push_back(pt);
  } else {
    points = bevopt::plan::pareto_sweep(scenario, prices, opt);
  }
  std::filesystem::create_directories(out_dir);
  bevopt::io::write_file(std::filesystem::path(out_dir) / "pareto.csv",
                         bevopt::io::pareto_csv(points));
  int converged = 0;
  for (const auto& p : points) converged += p.converged ? 1 : 0;
  std::printf("pareto: %d/%zu points converged\n", converged, points.size());
  return converged > 0 ? 0 : 2;
}

int run_sweep(const std::string& scenario_path, const std::string& ambients_str,
              const std::string& hp_str, double time_price, const std::string& out_dir,
              int jobs) {
  bevopt::Scenario scenario = bevopt::io::load_scenario(scenario_path);
  scenario.time_price_per_h = time_price;
  bevopt::plan::PlanOptions opt;
  opt.jobs = jobs;
  const auto cells = bevopt::plan::ambient_sweep(scenario, parse_list(ambients_str),
                                                 parse_list(hp_str), opt);
  std::filesystem::create_directories(out_dir);
  bevopt::io::write_file(std::filesystem::path(out_dir) / "ambient.csv",
                         bevopt::io::ambient_csv(cells));
  int converged = 0;
  for (const auto& c : cells) converged += c.converged ? 1 : 0;
  std::printf("sweep: %d/%zu cells converged\n", converged, cells.size());
  return converged > 0 ? 0 : 2;
}

int run_validate(const std::string& scenario_path, const std::string& solution_dir,
                 int substeps) {
  const bevopt::Scenario scenario = bevopt::io::load_scenario(scenario_path);
  const bevopt::ocp::Trajectory traj = bevopt::io::read_solution(solution_dir, scenario);
  const auto trace = bevopt::plant::simulate(scenario, traj, substeps);
  const auto dev = bevopt::plant::compare(trace, traj);
  std::printf("max deviation: soc %.3e, tb %.3e K\n", dev.max_dsoc, dev.max_dtb_c);
  return (dev.max_dsoc <= 1e-3 && dev.max_dtb_c <= 0.1) ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BEV long-trip thermal management and charging optimizer"};
  app.require_subcommand(1);
  app.fallthrough();
  int jobs = 2;
  app.add_option("--jobs", jobs, "max parallel NLP solves")->capture_default_str();

  std::string scenario_path, out_dir, zeta_str;
  double ds_m = 4000.0;
  int tau_steps = 20;
  auto* solve = app.add_subcommand("solve", "solve one scenario (all combinations or a forced zeta)");
  solve->add_option("--scenario", scenario_path, "scenario JSON")->required();
  solve->add_option("--out", out_dir, "output directory")->required();
  solve->add_option("--zeta", zeta_str, "force a charger combination, e.g. 011");
  solve->add_option("--ds-m", ds_m, "driving grid step [m]")->capture_default_str();
  solve->add_option("--tau-steps", tau_steps, "charging grid intervals")->capture_default_str();

  std::string prices_str = "0,5,10,20,40,80,160,320";
  auto* pareto = app.add_subcommand("pareto", "sweep the charging-time price");
  pareto->add_option("--scenario", scenario_path, "scenario JSON")->required();
  pareto->add_option("--time-prices", prices_str, "ascending comma list of c_t [currency/h]")
      ->capture_default_str();
  pareto->add_option("--out", out_dir, "output directory")->required();

  std::string ambients_str = "-10,-5,0,5,10,15";
  std::string hp_str = "0,1000,3000";
  double time_price = 40.0;
  auto* sweep = app.add_subcommand("sweep", "ambient-temperature x HP-limit grid");
  sweep->add_option("--scenario", scenario_path, "scenario JSON")->required();
  sweep->add_option("--ambients", ambients_str, "comma list of T_amb [C]")->capture_default_str();
  sweep->add_option("--hp-limits", hp_str, "comma list of HP power limits [W]")
      ->capture_default_str();
  sweep->add_option("--time-price", time_price, "fixed c_t [currency/h]")->capture_default_str();
  sweep->add_option("--out", out_dir, "output directory")->required();

  std::string solution_dir;
  int substeps = 10;
  auto* validate = app.add_subcommand("validate", "replay a solution through the plant model");
  validate->add_option("--scenario", scenario_path, "scenario JSON")->required();
  validate->add_option("--solution", solution_dir, "directory written by solve")->required();
  validate->add_option("--substeps", substeps, "integration substeps per interval")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return run_solve(scenario_path, out_dir, zeta_str, ds_m, tau_steps, jobs);
    if (pareto->parsed()) return run_pareto(scenario_path, prices_str, out_dir, jobs);
    if (sweep->parsed())
      return run_sweep(scenario_path, ambients_str, hp_str, time_price, out_dir, jobs);
    if (validate->parsed()) return run_validate(scenario_path, solution_dir, substeps);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
