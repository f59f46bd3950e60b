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

#include <array>
#include <cmath>
#include <cstddef>

namespace bevopt {

// Forward-mode dual number with a fixed-width tangent vector. Constraint rows
// of the transcribed problems touch at most a dozen variables, so a small
// static width covers every kernel without heap traffic.
template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit from constants is the point

  static Dual seeded(double value, int slot) {
    Dual r(value);
    r.d[static_cast<std::size_t>(slot)] = 1.0;
    return r;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }
  Dual& operator/=(const Dual& o) { return *this = *this / o; }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator-(const Dual& a) {
    Dual r(-a.v);
    for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
    return r;
  }
  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r(a.v * b.v);
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
  }
  friend Dual operator*(const Dual& a, double s) {
    Dual r(a.v * s);
    for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * s;
    return r;
  }
  friend Dual operator*(double s, const Dual& a) { return a * s; }
  friend Dual operator/(const Dual& a, const Dual& b) {
    const double inv = 1.0 / b.v;
    Dual r(a.v * inv);
    for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
    return r;
  }
  friend Dual operator/(const Dual& a, double s) { return a * (1.0 / s); }
  friend Dual operator/(double s, const Dual& b) { return Dual(s) / b; }

  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
};

inline double value_of(double x) { return x; }
template <int N>
double value_of(const Dual<N>& x) {
  return x.v;
}

template <int N>
Dual<N> exp(const Dual<N>& a) {
  const double e = std::exp(a.v);
  Dual<N> r(e);
  for (int i = 0; i < N; ++i) r.d[i] = e * a.d[i];
  return r;
}

template <int N>
Dual<N> log(const Dual<N>& a) {
  Dual<N> r(std::log(a.v));
  const double inv = 1.0 / a.v;
  for (int i = 0; i < N; ++i) r.d[i] = inv * a.d[i];
  return r;
}

template <int N>
Dual<N> log1p(const Dual<N>& a) {
  Dual<N> r(std::log1p(a.v));
  const double inv = 1.0 / (1.0 + a.v);
  for (int i = 0; i < N; ++i) r.d[i] = inv * a.d[i];
  return r;
}

template <int N>
Dual<N> sqrt(const Dual<N>& a) {
  const double s = std::sqrt(a.v);
  Dual<N> r(s);
  const double inv = 0.5 / s;
  for (int i = 0; i < N; ++i) r.d[i] = inv * a.d[i];
  return r;
}

// Exact positive part; kinked at 0, so optimization evaluators prefer
// softplus_pos below.
inline double max0(double x) { return x > 0.0 ? x : 0.0; }
template <int N>
Dual<N> max0(const Dual<N>& x) {
  return x.v > 0.0 ? x : Dual<N>(0.0);
}

// Smoothed positive part: width*log(1+exp(x/width)), evaluated in the
// overflow-safe split form. Approaches max(0,x) as width -> 0 and always
// dominates it, so smoothed heat demands are never under-delivered.
template <class T>
T softplus_pos(const T& x, double width) {
  const T t = x / width;
  using std::exp;
  using std::log1p;
  if (value_of(t) > 0.0) return x + width * log1p(exp(-t));
  return width * log1p(exp(t));
}

}  // namespace bevopt
