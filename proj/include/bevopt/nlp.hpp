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
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>
#ifdef BEVOPT_NLP_TRACE
#include <cstdio>
#endif

namespace bevopt::nlp {

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

// Smooth constrained program: min f(z) s.t. h(z) = 0, g(z) <= 0, lb <= z <= ub.
// Jacobian callbacks are optional; central differences stand in when absent.
struct NlpProblem {
  int n = 0;
  std::vector<double> lower, upper;
  std::function<double(std::span<const double>)> objective;
  std::function<void(std::span<const double>, std::span<double>)> objective_gradient;
  int n_eq = 0;
  int n_ineq = 0;
  std::function<void(std::span<const double>, std::span<double>)> equality;
  std::function<void(std::span<const double>, std::span<double>)> inequality;
  std::function<void(std::span<const double>, std::vector<Triplet>&)> equality_jacobian;
  std::function<void(std::span<const double>, std::vector<Triplet>&)> inequality_jacobian;
  // Optional exact objective Hessian (symmetric; emit each entry once with its
  // full value at (row, col); both triangles accepted).
  std::function<void(std::span<const double>, std::vector<Triplet>&)> objective_hessian;
  // Optional weighted constraint curvature: emits the entries of
  // sum_r w_eq[r] hess(h_r) + sum_r w_ineq[r] hess(g_r), one triplet per
  // unordered variable pair. Enables exact-Newton inner iterations.
  std::function<void(std::span<const double>, std::span<const double>, std::span<const double>,
                     std::vector<Triplet>&)>
      constraint_hessian;
};

enum class SolveStatus { converged, max_iterations, infeasible, numerical_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

struct OuterIterate {
  double merit_start = 0.0;  // augmented Lagrangian at inner start (fixed multipliers)
  double merit_end = 0.0;    // same multipliers, after the inner descent
  double feasibility = 0.0;
  double penalty = 0.0;
  int inner_iterations = 0;
};

struct SolveReport {
  std::vector<double> z_star;
  double f_star = 0.0;
  double kkt_residual = std::numeric_limits<double>::infinity();
  double feasibility = std::numeric_limits<double>::infinity();
  int iterations = 0;  // total inner iterations
  int outer_iterations = 0;
  SolveStatus status = SolveStatus::numerical_failure;
  std::vector<double> eq_multipliers, ineq_multipliers;
  std::vector<OuterIterate> trace;
};

struct SolveOptions {
  double kkt_tol = 1e-6;
  double feas_tol = 1e-6;
  int max_outer = 60;
  int max_inner = 3000;  // quasi-Newton inners need headroom on stiff valleys
  double penalty_init = 10.0;
  double penalty_growth = 10.0;
  double penalty_max = 1e12;
  int lbfgs_memory = 40;
  // Problems at or below this size with analytic Jacobians run a damped
  // Gauss-Newton inner (dense Cholesky on the free variables); others use the
  // projected quasi-Newton loop.
  int dense_newton_threshold = 4000;
  int newton_max_inner = 150;
  double fd_step = 1e-7;
};

struct GradientCheckResult {
  double objective_error = 0.0;
  double equality_error = 0.0;
  double inequality_error = 0.0;
  double max_error = 0.0;
};

namespace detail {

inline double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void fd_gradient(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> z, double step, std::span<double> out) {
  std::vector<double> zp(z.begin(), z.end());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = zp[i];
    zp[i] = zi + step;
    const double fp = f(zp);
    zp[i] = zi - step;
    const double fm = f(zp);
    zp[i] = zi;
    out[i] = (fp - fm) / (2.0 * step);
  }
}

class LbfgsMemory {
 public:
  explicit LbfgsMemory(int capacity) : capacity_(capacity) {}

  void clear() {
    s_.clear();
    y_.clear();
    rho_.clear();
  }

  void push(std::vector<double> s, std::vector<double> y) {
    double sy = 0.0, ss = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      sy += s[i] * y[i];
      ss += s[i] * s[i];
      yy += y[i] * y[i];
    }
    if (!(sy > 1e-12 * std::sqrt(ss * yy))) return;  // curvature guard
    if (static_cast<int>(s_.size()) == capacity_) {
      s_.pop_front();
      y_.pop_front();
      rho_.pop_front();
    }
    s_.push_back(std::move(s));
    y_.push_back(std::move(y));
    rho_.push_back(1.0 / sy);
  }

  // Two-loop recursion with a diagonal initial matrix: d = -H g,
  // H0 = gamma * diag(dinv), gamma = s.y / (y' dinv y).
  void direction(std::span<const double> g, std::span<const double> dinv,
                 std::span<double> d) const {
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
    if (s_.empty()) {
      for (std::size_t i = 0; i < n; ++i) d[i] *= dinv[i];
      return;
    }
    const std::size_t m = s_.size();
    std::vector<double> alpha(m);
    for (std::size_t k = m; k-- > 0;) {
      double a = 0.0;
      for (std::size_t i = 0; i < n; ++i) a += s_[k][i] * d[i];
      a *= rho_[k];
      alpha[k] = a;
      for (std::size_t i = 0; i < n; ++i) d[i] -= a * y_[k][i];
    }
    double sy = 0.0, ydy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sy += s_[m - 1][i] * y_[m - 1][i];
      ydy += y_[m - 1][i] * dinv[i] * y_[m - 1][i];
    }
    const double gamma = ydy > 0.0 ? sy / ydy : 1.0;
    for (std::size_t i = 0; i < n; ++i) d[i] *= gamma * dinv[i];
    for (std::size_t k = 0; k < m; ++k) {
      double b = 0.0;
      for (std::size_t i = 0; i < n; ++i) b += y_[k][i] * d[i];
      b *= rho_[k];
      for (std::size_t i = 0; i < n; ++i) d[i] += (alpha[k] - b) * s_[k][i];
    }
  }

 private:
  int capacity_;
  std::deque<std::vector<double>> s_, y_;
  std::deque<double> rho_;
};

// Dense inverse-BFGS approximation for the inner subproblems. At the desk
// scale of the transcribed programs (n ~ 1000-2000) the O(n^2) update costs
// about as much as one constraint-Jacobian evaluation and buys superlinear
// local convergence that limited memory cannot deliver on flat valleys.
class DenseBfgs {
 public:
  void reset(std::span<const double> dinv) {
    n_ = dinv.size();
    h_.assign(n_ * n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) h_[i * n_ + i] = dinv[i];
    hy_.resize(n_);
  }

  void direction(std::span<const double> g, std::span<double> d) const {
    for (std::size_t i = 0; i < n_; ++i) {
      const double* row = h_.data() + i * n_;
      double acc = 0.0;
      for (std::size_t j = 0; j < n_; ++j) acc -= row[j] * g[j];
      d[i] = acc;
    }
  }

  void update(std::span<const double> s, std::span<const double> y) {
    double sy = 0.0, ss = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      sy += s[i] * y[i];
      ss += s[i] * s[i];
      yy += y[i] * y[i];
    }
    if (!(sy > 1e-12 * std::sqrt(ss * yy))) return;
    const double rho = 1.0 / sy;
    double yhy = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double* row = h_.data() + i * n_;
      double acc = 0.0;
      for (std::size_t j = 0; j < n_; ++j) acc += row[j] * y[j];
      hy_[i] = acc;
    }
    for (std::size_t i = 0; i < n_; ++i) yhy += y[i] * hy_[i];
    const double c = rho * rho * yhy + rho;
    for (std::size_t i = 0; i < n_; ++i) {
      double* row = h_.data() + i * n_;
      const double si = s[i], hyi = hy_[i];
      for (std::size_t j = 0; j < n_; ++j)
        row[j] += c * si * s[j] - rho * (si * hy_[j] + hyi * s[j]);
    }
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> h_, hy_;
};

// Augmented Lagrangian value/gradient at fixed multipliers and penalty.
class AugLag {
 public:
  AugLag(const NlpProblem& p, const SolveOptions& opt, double f_scale)
      : p_(p), opt_(opt), f_scale_(f_scale) {
    lambda.assign(static_cast<std::size_t>(p.n_eq), 0.0);
    sigma.assign(static_cast<std::size_t>(p.n_ineq), 0.0);
    h_.resize(static_cast<std::size_t>(p.n_eq));
    g_.resize(static_cast<std::size_t>(p.n_ineq));
    weq_.resize(static_cast<std::size_t>(p.n_eq));
    wineq_.resize(static_cast<std::size_t>(p.n_ineq));
    mu = opt.penalty_init;
  }

  double value(std::span<const double> z) {
    double val = f_scale_ * p_.objective(z);
    if (p_.n_eq) {
      p_.equality(z, h_);
      for (std::size_t i = 0; i < h_.size(); ++i)
        val += lambda[i] * h_[i] + 0.5 * mu * h_[i] * h_[i];
    }
    if (p_.n_ineq) {
      p_.inequality(z, g_);
      for (std::size_t i = 0; i < g_.size(); ++i) {
        const double t = sigma[i] + mu * g_[i];
        val += ((t > 0.0 ? t * t : 0.0) - sigma[i] * sigma[i]) / (2.0 * mu);
      }
    }
    return val;
  }

  // AL gradient plus the Gauss-Newton diagonal of its Hessian (mu * J^T J
  // restricted to active terms); the diagonal preconditions the inner solver
  // against the penalty-induced conditioning spread.
  void gradient(std::span<const double> z, std::span<double> out,
                std::span<double> diag = {}) {
    objective_grad(z, out);
    const bool want_diag = !diag.empty();
    if (want_diag)
      for (double& d : diag) d = 0.0;
    if (p_.n_eq) {
      p_.equality(z, h_);
      for (std::size_t i = 0; i < h_.size(); ++i) weq_[i] = lambda[i] + mu * h_[i];
      add_jtw(p_.equality_jacobian, p_.equality, p_.n_eq, z, weq_, {}, out, diag);
    }
    if (p_.n_ineq) {
      p_.inequality(z, g_);
      for (std::size_t i = 0; i < g_.size(); ++i) {
        const double t = sigma[i] + mu * g_[i];
        wineq_[i] = t > 0.0 ? t : 0.0;
      }
      add_jtw(p_.inequality_jacobian, p_.inequality, p_.n_ineq, z, wineq_, wineq_, out, diag);
    }
  }

  // Dense Hessian of the AL: f_scale * objective Hessian plus
  // mu * J^T J over equality rows and active inequality rows, plus (when the
  // problem provides it) the exact multiplier-weighted constraint curvature.
  // Relies on the Jacobian emitters grouping triplets by row.
  void hessian(std::span<const double> z, int n, std::vector<double>& b) {
    b.assign(static_cast<std::size_t>(n) * n, 0.0);
    if (p_.objective_hessian) {
      trips_.clear();
      p_.objective_hessian(z, trips_);
      for (const Triplet& t : trips_) {
        b[static_cast<std::size_t>(t.row) * n + t.col] += f_scale_ * t.value;
        if (t.row != t.col) b[static_cast<std::size_t>(t.col) * n + t.row] += f_scale_ * t.value;
      }
    }
    auto accumulate = [&](const std::function<void(std::span<const double>,
                                                   std::vector<Triplet>&)>& jac,
                          std::span<const double> gate) {
      if (!jac) return;
      trips_.clear();
      jac(z, trips_);
      std::size_t i = 0;
      while (i < trips_.size()) {
        const int row = trips_[i].row;
        std::size_t j = i;
        while (j < trips_.size() && trips_[j].row == row) ++j;
        if (gate.empty() || gate[static_cast<std::size_t>(row)] > 0.0) {
          for (std::size_t a = i; a < j; ++a)
            for (std::size_t c = i; c < j; ++c)
              b[static_cast<std::size_t>(trips_[a].col) * n + trips_[c].col] +=
                  mu * trips_[a].value * trips_[c].value;
        }
        i = j;
      }
    };
    if (p_.n_eq) accumulate(p_.equality_jacobian, {});
    if (p_.n_ineq) {
      p_.inequality(z, g_);
      for (std::size_t i = 0; i < g_.size(); ++i)
        wineq_[i] = (sigma[i] + mu * g_[i]) > 0.0 ? 1.0 : 0.0;
      accumulate(p_.inequality_jacobian, wineq_);
    }
    if (p_.constraint_hessian) {
      if (p_.n_eq) {
        p_.equality(z, h_);
        for (std::size_t i = 0; i < h_.size(); ++i) weq_[i] = lambda[i] + mu * h_[i];
      }
      if (p_.n_ineq) {
        p_.inequality(z, g_);
        for (std::size_t i = 0; i < g_.size(); ++i) {
          const double t = sigma[i] + mu * g_[i];
          wineq_[i] = t > 0.0 ? t : 0.0;
        }
      }
      trips_.clear();
      p_.constraint_hessian(z, weq_, wineq_, trips_);
      for (const Triplet& t : trips_) {
        b[static_cast<std::size_t>(t.row) * n + t.col] += t.value;
        if (t.row != t.col) b[static_cast<std::size_t>(t.col) * n + t.row] += t.value;
      }
    }
  }

  std::vector<double> lambda, sigma;
  double mu = 1.0;
  double f_scale() const { return f_scale_; }

 private:
  void objective_grad(std::span<const double> z, std::span<double> out) {
    if (p_.objective_gradient)
      p_.objective_gradient(z, out);
    else
      fd_gradient(p_.objective, z, opt_.fd_step, out);
    for (double& v : out) v *= f_scale_;
  }

  // out += J^T w; when diag is nonempty, also diag += mu * J_ri^2 over rows
  // that contribute (for inequalities only rows with active shifted weight).
  void add_jtw(const std::function<void(std::span<const double>, std::vector<Triplet>&)>& jac,
               const std::function<void(std::span<const double>, std::span<double>)>& fn, int m,
               std::span<const double> z, std::span<const double> w,
               std::span<const double> active_gate, std::span<double> out,
               std::span<double> diag) {
    if (jac) {
      trips_.clear();
      jac(z, trips_);
      for (const Triplet& t : trips_) {
        const std::size_t r = static_cast<std::size_t>(t.row);
        const std::size_t c = static_cast<std::size_t>(t.col);
        out[c] += w[r] * t.value;
        if (!diag.empty() && (active_gate.empty() || active_gate[r] > 0.0))
          diag[c] += mu * t.value * t.value;
      }
      return;
    }
    std::vector<double> zp(z.begin(), z.end());
    std::vector<double> cp(static_cast<std::size_t>(m)), cm(static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double zi = zp[i];
      zp[i] = zi + opt_.fd_step;
      fn(zp, cp);
      zp[i] = zi - opt_.fd_step;
      fn(zp, cm);
      zp[i] = zi;
      double acc = 0.0;
      for (std::size_t r = 0; r < cp.size(); ++r)
        acc += w[r] * (cp[r] - cm[r]) / (2.0 * opt_.fd_step);
      out[i] += acc;
    }
  }

  const NlpProblem& p_;
  const SolveOptions& opt_;
  double f_scale_;
  std::vector<double> h_, g_, weq_, wineq_;
  std::vector<Triplet> trips_;
};

struct InnerResult {
  double merit_start = 0.0;
  double merit_end = 0.0;
  double pg_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool failed = false;  // non-finite values encountered
};

// Projected quasi-Newton with a Gauss-Newton diagonal preconditioner and
// Armijo backtracking along the projection arc. Dense BFGS below the size
// threshold, limited-memory two-loop above it.
inline InnerResult minimize_inner(AugLag& al, std::vector<double>& z,
                                  std::span<const double> lo, std::span<const double> hi,
                                  double tol, int max_iter, LbfgsMemory& mem, DenseBfgs& bfgs,
                                  bool dense, bool reset_engine) {
  const std::size_t n = z.size();
  InnerResult res;
  std::vector<double> grad(n), diag(n), dinv(n), d(n), z_try(n), g_new(n), d_new(n), step(n);

  auto project_point = [&](std::vector<double>& v) {
    for (std::size_t i = 0; i < n; ++i) v[i] = std::clamp(v[i], lo[i], hi[i]);
  };
  auto pg_norm = [&](const std::vector<double>& zz, const std::vector<double>& gg) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      m = std::max(m, std::abs(std::clamp(zz[i] - gg[i], lo[i], hi[i]) - zz[i]));
    return m;
  };
  auto invert_diag = [&](const std::vector<double>& dg, std::vector<double>& out) {
    double dmax = 0.0;
    for (double v : dg) dmax = std::max(dmax, v);
    const double floor = std::max(1e-8 * dmax, 1.0);  // objective curvature is O(1) in scaled vars
    for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / std::max(dg[i], floor);
  };

  project_point(z);
  double f = al.value(z);
  if (!std::isfinite(f)) {
    res.failed = true;
    return res;
  }
  res.merit_start = f;
  al.gradient(z, grad, diag);
  invert_diag(diag, dinv);
  if (reset_engine) {
    if (dense)
      bfgs.reset(dinv);
    else
      mem.clear();
  }
  res.pg_norm = pg_norm(z, grad);

  int it = 0;
  while (res.pg_norm > tol && it < max_iter) {
    bool accepted = false;
    double f_accepted = f;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      if (attempt == 0) {
        if (dense)
          bfgs.direction(grad, d);
        else
          mem.direction(grad, dinv, d);
        if (!(dot(grad, d) < 0.0)) continue;  // not a descent direction; fall through
      } else {
        if (dense)
          bfgs.reset(dinv);
        else
          mem.clear();
        for (std::size_t i = 0; i < n; ++i) d[i] = -grad[i] * dinv[i];
      }
      double alpha = 1.0;
      for (int bt = 0; bt < 50 && alpha >= 1e-14; ++bt, alpha *= 0.5) {
        for (std::size_t i = 0; i < n; ++i) z_try[i] = z[i] + alpha * d[i];
        project_point(z_try);
        double smax = 0.0, gs = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          step[i] = z_try[i] - z[i];
          smax = std::max(smax, std::abs(step[i]));
          gs += grad[i] * step[i];
        }
        if (smax == 0.0) break;   // bounds allow no movement along d
        if (!(gs < 0.0)) break;   // projection bent d into a non-descent step
        const double f_try = al.value(z_try);
        // Strict decrease required: accepting an FP-noise tie here would spin
        // forever on a poor direction instead of falling back to steepest.
        if (std::isfinite(f_try) && f_try <= f + 1e-4 * gs && f_try < f) {
          accepted = true;
          f_accepted = f_try;
          break;
        }
      }
    }
    if (!accepted) break;  // stalled (typically at a bound corner near optimality)

#ifdef BEVOPT_NLP_TRACE
    if (it % 500 == 0) {
      double smax = 0.0, gg = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        smax = std::max(smax, std::abs(step[i]));
        gg += grad[i] * grad[i];
      }
      std::printf("    it %6d pg %.3e f %.10e ||g|| %.3e step %.3e\n", it, res.pg_norm, f,
                  std::sqrt(gg), smax);
    }
#endif
    al.gradient(z_try, g_new, diag);
    invert_diag(diag, dinv);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = g_new[i] - grad[i];
    if (dense)
      bfgs.update(step, y);
    else
      mem.push(step, std::move(y));
    z.swap(z_try);
    grad.swap(g_new);
    f = f_accepted;
    ++it;
    res.pg_norm = pg_norm(z, grad);
    if (!std::isfinite(res.pg_norm)) {
      res.failed = true;
      break;
    }
  }
  res.merit_end = f;
  res.iterations = it;
  return res;
}

// In-place lower Cholesky; returns false when the matrix is not positive
// definite. Row-major m x m.
inline bool cholesky_factor(std::vector<double>& a, int m) {
  for (int j = 0; j < m; ++j) {
    double* colj = a.data() + static_cast<std::size_t>(j) * m;
    double diag = colj[j];
    for (int k = 0; k < j; ++k) diag -= colj[k] * colj[k];
    if (!(diag > 0.0)) return false;
    const double ljj = std::sqrt(diag);
    colj[j] = ljj;
    const double inv = 1.0 / ljj;
    for (int i = j + 1; i < m; ++i) {
      double* rowi = a.data() + static_cast<std::size_t>(i) * m;
      double v = rowi[j];
      for (int k = 0; k < j; ++k) v -= rowi[k] * colj[k];
      rowi[j] = v * inv;
    }
  }
  return true;
}

inline void cholesky_solve(const std::vector<double>& l, int m, std::span<double> x) {
  for (int i = 0; i < m; ++i) {
    const double* rowi = l.data() + static_cast<std::size_t>(i) * m;
    double v = x[static_cast<std::size_t>(i)];
    for (int k = 0; k < i; ++k) v -= rowi[k] * x[static_cast<std::size_t>(k)];
    x[static_cast<std::size_t>(i)] = v / rowi[i];
  }
  for (int i = m - 1; i >= 0; --i) {
    double v = x[static_cast<std::size_t>(i)];
    for (int k = i + 1; k < m; ++k)
      v -= l[static_cast<std::size_t>(k) * m + i] * x[static_cast<std::size_t>(k)];
    x[static_cast<std::size_t>(i)] = v / l[static_cast<std::size_t>(i) * m + i];
  }
}

// Damped Gauss-Newton inner loop: active bounds are frozen, the free block of
// mu J^T J + f'' + damping*I is factored and the step line-searched along the
// projection arc. The Levenberg damping persists across calls.
inline InnerResult minimize_inner_newton(AugLag& al, std::vector<double>& z,
                                         std::span<const double> lo, std::span<const double> hi,
                                         double tol, int max_iter, double& damping) {
  const std::size_t n = z.size();
  InnerResult res;
  std::vector<double> grad(n), d(n), z_try(n), step(n);
  std::vector<double> b_full, b_free;
  std::vector<int> free_idx;
  std::vector<double> rhs;

  auto project_point = [&](std::vector<double>& v) {
    for (std::size_t i = 0; i < n; ++i) v[i] = std::clamp(v[i], lo[i], hi[i]);
  };
  auto pg_norm = [&](const std::vector<double>& zz, const std::vector<double>& gg) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      m = std::max(m, std::abs(std::clamp(zz[i] - gg[i], lo[i], hi[i]) - zz[i]));
    return m;
  };

  project_point(z);
  double f = al.value(z);
  if (!std::isfinite(f)) {
    res.failed = true;
    return res;
  }
  res.merit_start = f;
  al.gradient(z, grad);
  res.pg_norm = pg_norm(z, grad);

  int it = 0;
  int tiny_steps = 0;
  while (res.pg_norm > tol && it < max_iter) {
    al.hessian(z, static_cast<int>(n), b_full);
    free_idx.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const bool at_lo = z[i] <= lo[i] + 1e-12;
      const bool at_hi = z[i] >= hi[i] - 1e-12;
      if (lo[i] == hi[i] || (at_lo && grad[i] > 0.0) || (at_hi && grad[i] < 0.0)) continue;
      free_idx.push_back(static_cast<int>(i));
    }
    const int nf = static_cast<int>(free_idx.size());
    if (nf == 0) break;
    double max_diag = 0.0;
    for (int i : free_idx)
      max_diag = std::max(max_diag, b_full[static_cast<std::size_t>(i) * n + i]);
    // Marquardt scaling: damp each direction in proportion to its own
    // curvature so the penalty-stiff directions do not drown the flat ones.
    const double diag_floor = 1e-10 * std::max(max_diag, 1.0) + 1e-12;

    bool accepted = false;
    double f_accepted = f;
    for (int attempt = 0; attempt < 14 && !accepted; ++attempt) {
      b_free.assign(static_cast<std::size_t>(nf) * nf, 0.0);
      for (int r = 0; r < nf; ++r) {
        const double* src = b_full.data() + static_cast<std::size_t>(free_idx[r]) * n;
        double* dst = b_free.data() + static_cast<std::size_t>(r) * nf;
        for (int c = 0; c < nf; ++c) dst[c] = src[free_idx[c]];
        dst[r] += damping * std::max(dst[r], diag_floor) + diag_floor;
      }
      if (!cholesky_factor(b_free, nf)) {
        damping = std::max(damping * 10.0, 1e-8) ;
        continue;
      }
      rhs.resize(static_cast<std::size_t>(nf));
      for (int r = 0; r < nf; ++r) rhs[static_cast<std::size_t>(r)] = -grad[free_idx[r]];
      cholesky_solve(b_free, nf, rhs);
      for (std::size_t i = 0; i < n; ++i) d[i] = 0.0;
      for (int r = 0; r < nf; ++r) d[free_idx[r]] = rhs[static_cast<std::size_t>(r)];
      if (!(dot(grad, d) < 0.0)) {
        damping *= 10.0;
        continue;
      }
      double alpha = 1.0;
      bool line_ok = false;
      for (int bt = 0; bt < 30 && alpha >= 1e-12; ++bt, alpha *= 0.5) {
        for (std::size_t i = 0; i < n; ++i) z_try[i] = z[i] + alpha * d[i];
        project_point(z_try);
        double smax = 0.0, gs = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          step[i] = z_try[i] - z[i];
          smax = std::max(smax, std::abs(step[i]));
          gs += grad[i] * step[i];
        }
        if (smax == 0.0) break;
        if (!(gs < 0.0)) break;
        const double f_try = al.value(z_try);
        if (std::isfinite(f_try) && f_try <= f + 1e-4 * gs && f_try < f) {
          line_ok = true;
          accepted = true;
          f_accepted = f_try;
          if (alpha >= 0.99)
            damping = std::max(damping * 0.25, 1e-10);
          else if (alpha < 0.25)
            damping *= 4.0;
          break;
        }
      }
      if (!line_ok && !accepted) damping *= 10.0;
      if (damping > 1e10) break;
    }
    if (!accepted) break;

    tiny_steps = (f - f_accepted < 1e-12 * (1.0 + std::abs(f))) ? tiny_steps + 1 : 0;
    z.swap(z_try);
    f = f_accepted;
    al.gradient(z, grad);
    ++it;
    res.pg_norm = pg_norm(z, grad);
    if (!std::isfinite(res.pg_norm)) {
      res.failed = true;
      break;
    }
    if (tiny_steps >= 5) break;  // flat to FP noise; let the outer loop decide
  }
  res.merit_end = f;
  res.iterations = it;
  return res;
}

}  // namespace detail

// Augmented-Lagrangian outer loop around a projected quasi-Newton inner
// minimizer. Deterministic: identical inputs give bit-identical reports.
inline SolveReport solve(const NlpProblem& p, std::vector<double> z0,
                         const SolveOptions& opt = {}) {
  const std::size_t n = static_cast<std::size_t>(p.n);
  if (z0.size() != n || p.lower.size() != n || p.upper.size() != n)
    throw std::invalid_argument("nlp::solve: dimension mismatch");
  for (std::size_t i = 0; i < n; ++i)
    if (!(p.lower[i] <= p.upper[i])) throw std::invalid_argument("nlp::solve: crossed bounds");

  SolveReport rep;
  std::vector<double> z = std::move(z0);
  for (std::size_t i = 0; i < n; ++i) z[i] = std::clamp(z[i], p.lower[i], p.upper[i]);

  const double f0 = p.objective(z);
  if (!std::isfinite(f0)) {
    rep.status = SolveStatus::numerical_failure;
    rep.z_star = z;
    return rep;
  }
  // Power-of-two objective normalization keeps the argmin exactly invariant
  // under positive cost rescaling up to FP rounding of the inputs.
  const double f_scale = std::exp2(-std::ceil(std::log2(std::max(1.0, std::abs(f0)))));

  detail::AugLag al(p, opt, f_scale);
  std::vector<double> h(static_cast<std::size_t>(p.n_eq)), g(static_cast<std::size_t>(p.n_ineq));

  auto violation = [&](std::span<const double> zz) {
    double v = 0.0;
    if (p.n_eq) {
      p.equality(zz, h);
      for (double x : h) v = std::max(v, std::abs(x));
    }
    if (p.n_ineq) {
      p.inequality(zz, g);
      for (double x : g) v = std::max(v, std::max(x, 0.0));
    }
    return v;
  };

  double omega = 1e-2;  // inner projected-gradient tolerance
  double eta = 1e-2;    // feasibility gate for multiplier updates
  bool converged = false;
  bool inner_failed = false;
  bool feasibility_stalled = false;
  int stalled_at_mu_max = 0;
  int stagnant = 0;
  int flat_outers = 0;
  double pg_best = std::numeric_limits<double>::infinity();
  double viol_prev = std::numeric_limits<double>::infinity();
  const bool newton = p.n <= opt.dense_newton_threshold &&
                      (p.equality_jacobian || p.inequality_jacobian || p.objective_hessian);
  const bool dense = p.n <= opt.dense_newton_threshold;
  detail::LbfgsMemory mem(opt.lbfgs_memory);
  detail::DenseBfgs bfgs;
  bool reset_engine = true;  // curvature carries across outers at fixed penalty
  double lm_damping = 1e-4;

  int hopeless_outers = 0;
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    double dual_scale = std::max(1.0, std::max(detail::inf_norm(al.lambda), detail::inf_norm(al.sigma)));
    const double tol_inner = std::max(omega, 0.25 * opt.kkt_tol * dual_scale);
    // Outers that exhaust their budget without merit or stationarity progress
    // get shrinking budgets; statuses stay honest either way.
    const int newton_budget =
        std::max(30, opt.newton_max_inner >> std::min(hopeless_outers, 3));
    detail::InnerResult inner =
        newton ? detail::minimize_inner_newton(al, z, p.lower, p.upper, tol_inner,
                                               newton_budget, lm_damping)
               : detail::minimize_inner(al, z, p.lower, p.upper, tol_inner, opt.max_inner, mem,
                                        bfgs, dense, reset_engine);
    reset_engine = false;
    const bool no_merit_progress =
        inner.merit_start - inner.merit_end < 1e-6 * (1.0 + std::abs(inner.merit_end));
    if (inner.iterations >= newton_budget && no_merit_progress && inner.pg_norm > 0.3 * pg_best)
      ++hopeless_outers;
    else if (inner.pg_norm <= tol_inner)
      hopeless_outers = 0;
    rep.iterations += inner.iterations;
    rep.outer_iterations = outer + 1;
    if (inner.failed) {
      inner_failed = true;
      break;
    }

    const double viol = violation(z);
    rep.trace.push_back({inner.merit_start, inner.merit_end, viol, al.mu, inner.iterations});
    rep.feasibility = viol;

    // Feasible but unable to certify stationarity, the merit no longer moving,
    // and the projected gradient not improving either: additional outer
    // iterations cannot produce a first-order certificate.
    if (viol <= opt.feas_tol &&
        inner.merit_start - inner.merit_end < 1e-6 * (1.0 + std::abs(inner.merit_end)) &&
        inner.pg_norm > 0.3 * pg_best)
      ++flat_outers;
    else
      flat_outers = 0;
    pg_best = std::min(pg_best, inner.pg_norm);

    // A violation asymptote above tolerance marks a (locally) infeasible
    // subproblem; stop grinding once the verdict is clear.
    if (viol > opt.feas_tol && viol > 0.9 * viol_prev)
      ++stagnant;
    else
      stagnant = 0;
    if ((stagnant >= 6 && al.mu >= 1e6) || stagnant >= 12) {
      feasibility_stalled = true;
      viol_prev = viol;
      break;
    }

    // Multipliers advance on sufficient feasibility or clear progress toward
    // it; the penalty escalates only when progress stalls.
    const bool update = viol <= std::max(eta, opt.feas_tol) || viol <= 0.25 * viol_prev ||
                        viol <= 10.0 * opt.feas_tol;
    viol_prev = viol;
    if (update) {
      for (std::size_t i = 0; i < h.size(); ++i) al.lambda[i] += al.mu * h[i];
      for (std::size_t i = 0; i < g.size(); ++i) al.sigma[i] = std::max(0.0, al.sigma[i] + al.mu * g[i]);
      dual_scale = std::max(1.0, std::max(detail::inf_norm(al.lambda), detail::inf_norm(al.sigma)));
      // The AL gradient at the moment of update equals the Lagrangian gradient
      // with the fresh multipliers, so the inner pg norm is the stationarity.
      double comp = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) comp = std::max(comp, std::abs(al.sigma[i] * g[i]));
      const double kkt = std::max({inner.pg_norm / dual_scale, viol, comp / dual_scale});
      rep.kkt_residual = kkt;
      if (kkt <= opt.kkt_tol && viol <= opt.feas_tol) {
        converged = true;
        break;
      }
      eta = std::max(0.2 * eta, 0.1 * opt.feas_tol);
      omega = std::max(0.2 * omega, 0.2 * opt.kkt_tol);
      if (flat_outers >= 3) break;
    } else {
      if (al.mu >= opt.penalty_max) {
        if (++stalled_at_mu_max >= 3) break;
      }
      al.mu = std::min(al.mu * opt.penalty_growth, opt.penalty_max);
      omega = std::max(0.5 * omega, 0.2 * opt.kkt_tol);
      reset_engine = true;  // the penalty term just changed the curvature scale
    }
  }

  rep.z_star = std::move(z);
  rep.f_star = p.objective(rep.z_star);
  rep.eq_multipliers.resize(al.lambda.size());
  for (std::size_t i = 0; i < al.lambda.size(); ++i) rep.eq_multipliers[i] = al.lambda[i] / f_scale;
  rep.ineq_multipliers.resize(al.sigma.size());
  for (std::size_t i = 0; i < al.sigma.size(); ++i) rep.ineq_multipliers[i] = al.sigma[i] / f_scale;

  if (converged) {
    rep.status = SolveStatus::converged;
  } else if (inner_failed) {
    rep.status = SolveStatus::numerical_failure;
  } else {
    rep.status = (rep.feasibility > opt.feas_tol &&
                  (feasibility_stalled || al.mu >= opt.penalty_max))
                     ? SolveStatus::infeasible
                     : SolveStatus::max_iterations;
  }
  return rep;
}

// Central-difference validation of the analytic callbacks. Compares every
// dense entry, so missing sparsity entries are caught as well. Columns with
// equal bounds are skipped: those variables are pinned constants of the
// program and often sit exactly on interpolation knots, where a central
// difference straddles the kink.
inline GradientCheckResult check_gradients(const NlpProblem& p, std::span<const double> z,
                                           double step = 1e-6) {
  const std::size_t n = static_cast<std::size_t>(p.n);
  GradientCheckResult res;
  auto rel = [](double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
  };
  auto pinned = [&](std::size_t i) {
    return !p.lower.empty() && p.lower[i] == p.upper[i];
  };

  if (p.objective_gradient) {
    std::vector<double> ga(n), gfd(n);
    p.objective_gradient(z, ga);
    detail::fd_gradient(p.objective, z, step, gfd);
    for (std::size_t i = 0; i < n; ++i)
      if (!pinned(i)) res.objective_error = std::max(res.objective_error, rel(ga[i], gfd[i]));
  }

  auto check_jac = [&](int m,
                       const std::function<void(std::span<const double>, std::span<double>)>& fn,
                       const std::function<void(std::span<const double>, std::vector<Triplet>&)>& jac) {
    if (!m || !jac) return 0.0;
    std::vector<double> dense(static_cast<std::size_t>(m) * n, 0.0);
    std::vector<Triplet> trips;
    jac(z, trips);
    for (const Triplet& t : trips)
      dense[static_cast<std::size_t>(t.row) * n + static_cast<std::size_t>(t.col)] += t.value;
    std::vector<double> zp(z.begin(), z.end());
    std::vector<double> cp(static_cast<std::size_t>(m)), cm(static_cast<std::size_t>(m));
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pinned(i)) continue;
      const double zi = zp[i];
      zp[i] = zi + step;
      fn(zp, cp);
      zp[i] = zi - step;
      fn(zp, cm);
      zp[i] = zi;
      for (std::size_t r = 0; r < cp.size(); ++r) {
        const double fd = (cp[r] - cm[r]) / (2.0 * step);
        err = std::max(err, rel(dense[r * n + i], fd));
      }
    }
    return err;
  };

  res.equality_error = check_jac(p.n_eq, p.equality, p.equality_jacobian);
  res.inequality_error = check_jac(p.n_ineq, p.inequality, p.inequality_jacobian);
  res.max_error = std::max({res.objective_error, res.equality_error, res.inequality_error});
  return res;
}

}  // namespace bevopt::nlp
