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

// Second-order forward-mode number: value, gradient, and packed
// upper-triangular Hessian with respect to up to N seed variables. Used to
// assemble exact constraint Hessians row by row.
template <int N>
struct Dual2 {
  static constexpr int kTri = N * (N + 1) / 2;
  double v = 0.0;
  std::array<double, N> g{};
  std::array<double, kTri> h{};

  Dual2() = default;
  Dual2(double value) : v(value) {}  // NOLINT: implicit from constants is the point

  static constexpr int tri(int i, int j) {  // requires i <= j
    return i * N - i * (i - 1) / 2 + (j - i);
  }

  static Dual2 seeded(double value, int slot) {
    Dual2 r(value);
    r.g[static_cast<std::size_t>(slot)] = 1.0;
    return r;
  }

  friend Dual2 operator+(const Dual2& a, const Dual2& b) {
    Dual2 r(a.v + b.v);
    for (int i = 0; i < N; ++i) r.g[i] = a.g[i] + b.g[i];
    for (int i = 0; i < kTri; ++i) r.h[i] = a.h[i] + b.h[i];
    return r;
  }
  friend Dual2 operator-(const Dual2& a, const Dual2& b) {
    Dual2 r(a.v - b.v);
    for (int i = 0; i < N; ++i) r.g[i] = a.g[i] - b.g[i];
    for (int i = 0; i < kTri; ++i) r.h[i] = a.h[i] - b.h[i];
    return r;
  }
  friend Dual2 operator-(const Dual2& a) {
    Dual2 r(-a.v);
    for (int i = 0; i < N; ++i) r.g[i] = -a.g[i];
    for (int i = 0; i < kTri; ++i) r.h[i] = -a.h[i];
    return r;
  }
  friend Dual2 operator*(const Dual2& a, const Dual2& b) {
    Dual2 r(a.v * b.v);
    for (int i = 0; i < N; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
    for (int i = 0, k = 0; i < N; ++i)
      for (int j = i; j < N; ++j, ++k)
        r.h[k] = a.h[k] * b.v + a.v * b.h[k] + a.g[i] * b.g[j] + a.g[j] * b.g[i];
    return r;
  }
  friend Dual2 operator*(const Dual2& a, double s) {
    Dual2 r(a.v * s);
    for (int i = 0; i < N; ++i) r.g[i] = a.g[i] * s;
    for (int i = 0; i < kTri; ++i) r.h[i] = a.h[i] * s;
    return r;
  }
  friend Dual2 operator*(double s, const Dual2& a) { return a * s; }
  friend Dual2 operator/(const Dual2& a, double s) { return a * (1.0 / s); }
  friend Dual2 operator/(const Dual2& a, const Dual2& b) { return a * reciprocal(b); }
  friend Dual2 operator/(double s, const Dual2& b) { return reciprocal(b) * s; }

  friend Dual2 reciprocal(const Dual2& b) {
    const double inv = 1.0 / b.v;
    const double inv2 = inv * inv;
    Dual2 r(inv);
    for (int i = 0; i < N; ++i) r.g[i] = -inv2 * b.g[i];
    for (int i = 0, k = 0; i < N; ++i)
      for (int j = i; j < N; ++j, ++k)
        r.h[k] = 2.0 * b.g[i] * b.g[j] * inv2 * inv - b.h[k] * inv2;
    return r;
  }

  Dual2& operator+=(const Dual2& o) { return *this = *this + o; }
  Dual2& operator-=(const Dual2& o) { return *this = *this - o; }
  Dual2& operator*=(const Dual2& o) { return *this = *this * o; }

  friend bool operator<(const Dual2& a, const Dual2& b) { return a.v < b.v; }
  friend bool operator>(const Dual2& a, const Dual2& b) { return a.v > b.v; }
};

template <int N>
double value_of(const Dual2<N>& x) {
  return x.v;
}

template <int N>
Dual2<N> exp(const Dual2<N>& a) {
  const double e = std::exp(a.v);
  Dual2<N> r(e);
  for (int i = 0; i < N; ++i) r.g[i] = e * a.g[i];
  for (int i = 0, k = 0; i < N; ++i)
    for (int j = i; j < N; ++j, ++k) r.h[k] = e * (a.g[i] * a.g[j] + a.h[k]);
  return r;
}

template <int N>
Dual2<N> log1p(const Dual2<N>& a) {
  const double c1 = 1.0 / (1.0 + a.v);
  Dual2<N> r(std::log1p(a.v));
  for (int i = 0; i < N; ++i) r.g[i] = c1 * a.g[i];
  for (int i = 0, k = 0; i < N; ++i)
    for (int j = i; j < N; ++j, ++k) r.h[k] = c1 * a.h[k] - c1 * c1 * a.g[i] * a.g[j];
  return r;
}

template <int N>
Dual2<N> max0(const Dual2<N>& x) {
  return x.v > 0.0 ? x : Dual2<N>(0.0);
}

}  // namespace bevopt
