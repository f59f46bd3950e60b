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
#include <array>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bevopt/dual.hpp"

namespace bevopt {

namespace detail {

// Piecewise-linear interpolation with optional C1 corner rounding: within
// half-width delta of a knot the two lines blend through a quadratic that
// matches value and slope at the zone edges. delta = 0 reproduces the exact
// piecewise-linear value. Clamped tails count as zero-slope segments, so the
// boundary kinks are rounded as well.
template <class T, class V>
T rounded_interp(const std::vector<double>& xs, const V* ys, const T& x, double delta) {
  const double xv = value_of(x);
  const std::size_t n = xs.size();
  if (n == 1) return T(ys[0]);
  auto slope = [&](std::size_t seg) -> T {  // segment seg: [xs[seg], xs[seg+1]]
    return T((ys[seg + 1] - ys[seg]) * (1.0 / (xs[seg + 1] - xs[seg])));
  };
  // Candidate knot whose rounding zone contains x.
  if (delta > 0.0) {
    std::size_t hi = static_cast<std::size_t>(
        std::upper_bound(xs.begin(), xs.end(), xv) - xs.begin());
    for (std::size_t knot : {hi > 0 ? hi - 1 : 0, std::min(hi, n - 1)}) {
      if (std::abs(xv - xs[knot]) >= delta) continue;
      const T s_left = knot == 0 ? T(0.0) : slope(knot - 1);
      const T s_right = knot + 1 == n ? T(0.0) : slope(knot);
      const T dx = x - xs[knot];
      const T blend = dx + delta;
      return T(ys[knot]) + s_left * dx + (s_right - s_left) * blend * blend * (0.25 / delta);
    }
  }
  if (xv <= xs.front()) return T(ys[0]);
  if (xv >= xs.back()) return T(ys[n - 1]);
  const std::size_t hi = static_cast<std::size_t>(
      std::upper_bound(xs.begin(), xs.end(), xv) - xs.begin());
  return T(ys[hi - 1]) + slope(hi - 1) * (x - xs[hi - 1]);
}

inline double min_gap(const std::vector<double>& xs) {
  double g = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < xs.size(); ++i) g = std::min(g, xs[i] - xs[i - 1]);
  return g;
}

}  // namespace detail

// Piecewise-linear curve over strictly increasing knots, clamped to the end
// values outside the knot range. Evaluation is templated so dual numbers flow
// through (clamped regions have zero slope).
class Curve1D {
 public:
  Curve1D() = default;
  Curve1D(std::vector<double> xs, std::vector<double> ys)
      : xs_(std::move(xs)), ys_(std::move(ys)) {
    if (xs_.size() != ys_.size() || xs_.empty())
      throw std::invalid_argument("Curve1D: knot arrays empty or mismatched");
    for (std::size_t i = 1; i < xs_.size(); ++i)
      if (!(xs_[i] > xs_[i - 1]))
        throw std::invalid_argument("Curve1D: knots must be strictly increasing");
  }
  Curve1D(std::initializer_list<std::pair<double, double>> knots) {
    xs_.reserve(knots.size());
    ys_.reserve(knots.size());
    for (const auto& [x, y] : knots) {
      xs_.push_back(x);
      ys_.push_back(y);
    }
    *this = Curve1D(std::move(xs_), std::move(ys_));
  }

  template <class T>
  T operator()(const T& x) const {
    return detail::rounded_interp(xs_, ys_.data(), x, smoothing_);
  }

  // Copy with C1 corner rounding of half-width frac * (smallest knot gap);
  // evaluation away from the rounding zones is unchanged.
  Curve1D with_smoothing(double frac) const {
    Curve1D c = *this;
    c.smoothing_ = xs_.size() > 1 ? std::min(frac, 0.49) * detail::min_gap(xs_) : 0.0;
    return c;
  }
  double smoothing() const { return smoothing_; }

  bool nondecreasing() const {
    for (std::size_t i = 1; i < ys_.size(); ++i)
      if (ys_[i] < ys_[i - 1]) return false;
    return true;
  }
  bool nonincreasing() const {
    for (std::size_t i = 1; i < ys_.size(); ++i)
      if (ys_[i] > ys_[i - 1]) return false;
    return true;
  }
  double min_value() const { return *std::min_element(ys_.begin(), ys_.end()); }
  double max_value() const { return *std::max_element(ys_.begin(), ys_.end()); }
  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& ys() const { return ys_; }

 private:
  std::vector<double> xs_, ys_;
  double smoothing_ = 0.0;
};

// Bilinear table on a rectangular grid, clamped to the edge in each axis.
// values are row-major: value(xs[i], ys[j]) = values[i*ny + j].
class Table2D {
 public:
  Table2D() = default;
  Table2D(std::vector<double> xs, std::vector<double> ys, std::vector<double> values)
      : xs_(std::move(xs)), ys_(std::move(ys)), v_(std::move(values)) {
    if (xs_.size() < 2 || ys_.size() < 2)
      throw std::invalid_argument("Table2D: need at least a 2x2 grid");
    if (xs_.size() > kMaxAxis || ys_.size() > kMaxAxis)
      throw std::invalid_argument("Table2D: grids beyond 32 knots per axis are unsupported");
    if (v_.size() != xs_.size() * ys_.size())
      throw std::invalid_argument("Table2D: value count does not match grid");
    for (std::size_t i = 1; i < xs_.size(); ++i)
      if (!(xs_[i] > xs_[i - 1])) throw std::invalid_argument("Table2D: x grid not increasing");
    for (std::size_t j = 1; j < ys_.size(); ++j)
      if (!(ys_[j] > ys_[j - 1])) throw std::invalid_argument("Table2D: y grid not increasing");
  }

  // Tensor-product interpolation: with zero smoothing this is exactly the
  // clamped bilinear value; with_smoothing() rounds the knot lines into C1
  // quadratic blends in both axes.
  template <class T>
  T operator()(const T& x, const T& y) const {
    const std::size_t nx = xs_.size(), ny = ys_.size();
    std::array<T, kMaxAxis> w;
    for (std::size_t i = 0; i < nx; ++i)
      w[i] = detail::rounded_interp(ys_, v_.data() + i * ny, y, sy_);
    return detail::rounded_interp(xs_, w.data(), x, sx_);
  }

  Table2D with_smoothing(double frac) const {
    Table2D t = *this;
    t.sx_ = std::min(frac, 0.49) * detail::min_gap(xs_);
    t.sy_ = std::min(frac, 0.49) * detail::min_gap(ys_);
    return t;
  }

  bool nondecreasing_in_x() const { return monotone_x(+1); }
  bool nonincreasing_in_x() const { return monotone_x(-1); }
  bool nondecreasing_in_y() const { return monotone_y(+1); }
  bool nonincreasing_in_y() const { return monotone_y(-1); }
  double min_value() const { return *std::min_element(v_.begin(), v_.end()); }
  double max_value() const { return *std::max_element(v_.begin(), v_.end()); }
  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& ys() const { return ys_; }
  const std::vector<double>& values() const { return v_; }

 private:
  static constexpr std::size_t kMaxAxis = 32;
  bool monotone_x(int sign) const {
    const std::size_t ny = ys_.size();
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 1; i < xs_.size(); ++i)
        if (sign * (v_[i * ny + j] - v_[(i - 1) * ny + j]) < 0.0) return false;
    return true;
  }
  bool monotone_y(int sign) const {
    const std::size_t ny = ys_.size();
    for (std::size_t i = 0; i < xs_.size(); ++i)
      for (std::size_t j = 1; j < ny; ++j)
        if (sign * (v_[i * ny + j] - v_[i * ny + j - 1]) < 0.0) return false;
    return true;
  }

  std::vector<double> xs_, ys_, v_;
  double sx_ = 0.0, sy_ = 0.0;
};

}  // namespace bevopt
