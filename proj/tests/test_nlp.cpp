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
#include <cstring>

#include "bevopt/nlp.hpp"

using namespace bevopt;

namespace {

nlp::NlpProblem shifted_quadratic() {
  nlp::NlpProblem p;
  p.n = 1;
  p.lower = {0.0};
  p.upper = {10.0};
  p.objective = [](std::span<const double> z) { return (z[0] - 3.0) * (z[0] - 3.0); };
  p.objective_gradient = [](std::span<const double> z, std::span<double> g) {
    g[0] = 2.0 * (z[0] - 3.0);
  };
  return p;
}

nlp::NlpProblem rosenbrock() {
  nlp::NlpProblem p;
  p.n = 2;
  p.lower = {-10.0, -10.0};
  p.upper = {10.0, 10.0};
  p.objective = [](std::span<const double> z) {
    const double a = 1.0 - z[0];
    const double b = z[1] - z[0] * z[0];
    return a * a + 100.0 * b * b;
  };
  p.objective_gradient = [](std::span<const double> z, std::span<double> g) {
    const double b = z[1] - z[0] * z[0];
    g[0] = -2.0 * (1.0 - z[0]) - 400.0 * z[0] * b;
    g[1] = 200.0 * b;
  };
  return p;
}

// min a+b subject to a^2 + b^2 = 1.
nlp::NlpProblem circle_problem() {
  nlp::NlpProblem p;
  p.n = 2;
  p.lower = {-2.0, -2.0};
  p.upper = {2.0, 2.0};
  p.objective = [](std::span<const double> z) { return z[0] + z[1]; };
  p.objective_gradient = [](std::span<const double>, std::span<double> g) {
    g[0] = 1.0;
    g[1] = 1.0;
  };
  p.n_eq = 1;
  p.equality = [](std::span<const double> z, std::span<double> h) {
    h[0] = z[0] * z[0] + z[1] * z[1] - 1.0;
  };
  p.equality_jacobian = [](std::span<const double> z, std::vector<nlp::Triplet>& t) {
    t.push_back({0, 0, 2.0 * z[0]});
    t.push_back({0, 1, 2.0 * z[1]});
  };
  return p;
}

}  // namespace

TEST_CASE("nlp: box-constrained quadratic") {
  const auto p = shifted_quadratic();
  const auto rep = nlp::solve(p, {9.0});
  CHECK(rep.status == nlp::SolveStatus::converged);
  CHECK(rep.z_star[0] == Approx(3.0).margin(1e-6));
  CHECK(rep.f_star == Approx(0.0).margin(1e-10));
}

TEST_CASE("nlp: Rosenbrock reaches the known optimum") {
  const auto p = rosenbrock();
  nlp::SolveOptions opt;
  opt.max_inner = 2000;
  const auto rep = nlp::solve(p, {-1.2, 1.0}, opt);
  CHECK(rep.status == nlp::SolveStatus::converged);
  CHECK(rep.z_star[0] == Approx(1.0).margin(1e-5));
  CHECK(rep.z_star[1] == Approx(1.0).margin(1e-5));
}

TEST_CASE("nlp: equality-constrained analytic optimum") {
  const auto p = circle_problem();
  const auto rep = nlp::solve(p, {0.5, -0.8});
  CHECK(rep.status == nlp::SolveStatus::converged);
  const double r = -std::sqrt(2.0) / 2.0;
  CHECK(rep.z_star[0] == Approx(r).margin(1e-5));
  CHECK(rep.z_star[1] == Approx(r).margin(1e-5));
  CHECK(rep.f_star == Approx(-std::sqrt(2.0)).margin(1e-5));
  CHECK(rep.feasibility <= 1e-6);
}

TEST_CASE("nlp: inequality activates only when violated") {
  // min (x+2)^2 s.t. x >= 1 written as 1 - x <= 0.
  nlp::NlpProblem p;
  p.n = 1;
  p.lower = {-10.0};
  p.upper = {10.0};
  p.objective = [](std::span<const double> z) { return (z[0] + 2.0) * (z[0] + 2.0); };
  p.objective_gradient = [](std::span<const double> z, std::span<double> g) {
    g[0] = 2.0 * (z[0] + 2.0);
  };
  p.n_ineq = 1;
  p.inequality = [](std::span<const double> z, std::span<double> g) { g[0] = 1.0 - z[0]; };
  p.inequality_jacobian = [](std::span<const double>, std::vector<nlp::Triplet>& t) {
    t.push_back({0, 0, -1.0});
  };
  const auto rep = nlp::solve(p, {5.0});
  CHECK(rep.status == nlp::SolveStatus::converged);
  CHECK(rep.z_star[0] == Approx(1.0).margin(1e-5));
  CHECK(rep.ineq_multipliers[0] > 0.0);
}

TEST_CASE("nlp: infeasible constraints are reported, never silent") {
  nlp::NlpProblem p;
  p.n = 1;
  p.lower = {0.0};
  p.upper = {1.0};
  p.objective = [](std::span<const double>) { return 0.0; };
  p.objective_gradient = [](std::span<const double>, std::span<double> g) { g[0] = 0.0; };
  p.n_eq = 1;
  p.equality = [](std::span<const double> z, std::span<double> h) { h[0] = z[0] - 5.0; };
  p.equality_jacobian = [](std::span<const double>, std::vector<nlp::Triplet>& t) {
    t.push_back({0, 0, 1.0});
  };
  nlp::SolveOptions opt;
  opt.max_outer = 40;
  const auto rep = nlp::solve(p, {0.5}, opt);
  CHECK(rep.status != nlp::SolveStatus::converged);
  CHECK(rep.feasibility > 1.0);
}

TEST_CASE("nlp: determinism is bit-exact") {
  const auto p = circle_problem();
  const auto a = nlp::solve(p, {0.5, -0.8});
  const auto b = nlp::solve(p, {0.5, -0.8});
  REQUIRE(a.z_star.size() == b.z_star.size());
  CHECK(std::memcmp(a.z_star.data(), b.z_star.data(), a.z_star.size() * sizeof(double)) == 0);
  CHECK(a.f_star == b.f_star);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("nlp: argmin is invariant under positive objective scaling") {
  for (double lambda : {0.1, 10.0}) {
    auto quad = shifted_quadratic();
    auto base_obj = quad.objective;
    quad.objective = [base_obj, lambda](std::span<const double> z) { return lambda * base_obj(z); };
    auto base_grad = quad.objective_gradient;
    quad.objective_gradient = [base_grad, lambda](std::span<const double> z, std::span<double> g) {
      base_grad(z, g);
      for (double& v : g) v *= lambda;
    };
    const auto rep = nlp::solve(quad, {9.0});
    CHECK(rep.z_star[0] == Approx(3.0).margin(1e-6));

    auto rb = rosenbrock();
    auto rb_obj = rb.objective;
    rb.objective = [rb_obj, lambda](std::span<const double> z) { return lambda * rb_obj(z); };
    auto rb_grad = rb.objective_gradient;
    rb.objective_gradient = [rb_grad, lambda](std::span<const double> z, std::span<double> g) {
      rb_grad(z, g);
      for (double& v : g) v *= lambda;
    };
    nlp::SolveOptions opt;
    opt.max_inner = 2000;
    const auto rep2 = nlp::solve(rb, {-1.2, 1.0}, opt);
    CHECK(rep2.z_star[0] == Approx(1.0).margin(1e-4));
    CHECK(rep2.z_star[1] == Approx(1.0).margin(1e-4));
  }
}

TEST_CASE("nlp: accepted outer iterations never increase their own merit") {
  const auto p = circle_problem();
  const auto rep = nlp::solve(p, {1.5, 1.5});
  REQUIRE(!rep.trace.empty());
  for (const auto& it : rep.trace) CHECK(it.merit_end <= it.merit_start + 1e-12);
}

TEST_CASE("nlp: gradient check validates and flags corruption") {
  auto p = circle_problem();
  const std::vector<double> z = {0.3, 0.4};
  const auto good = nlp::check_gradients(p, z);
  CHECK(good.max_error <= 1e-8);

  auto corrupted = p;
  corrupted.objective_gradient = [](std::span<const double>, std::span<double> g) {
    g[0] = 1.1;  // should be 1.0
    g[1] = 1.0;
  };
  const auto bad = nlp::check_gradients(corrupted, z);
  CHECK(bad.max_error > 1e-2);
}

TEST_CASE("nlp: finite-difference fallback when callbacks are missing") {
  auto p = shifted_quadratic();
  p.objective_gradient = nullptr;
  const auto rep = nlp::solve(p, {9.0});
  CHECK(rep.status == nlp::SolveStatus::converged);
  CHECK(rep.z_star[0] == Approx(3.0).margin(1e-5));
}
