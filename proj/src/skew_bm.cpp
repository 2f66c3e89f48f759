// Copyright 2026 The skewdiff Authors.
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

#include "skewdiff/skew_bm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace skewdiff {

namespace {

void check_grid(double T, std::int64_t n_steps) {
  if (!(T > 0.0) || !std::isfinite(T)) {
    throw std::invalid_argument("horizon T must be positive and finite");
  }
  if (n_steps < 1) {
    throw std::invalid_argument("n_steps must be at least 1");
  }
}

double gaussian_kernel(double t, double u) {
  return std::exp(-u * u / (2.0 * t)) / std::sqrt(2.0 * std::numbers::pi * t);
}

} // namespace

void SkewParams::validate() const {
  if (!(std::abs(q) <= 1.0)) {
    throw std::invalid_argument("skewness q must lie in [-1, 1], got " +
                                std::to_string(q));
  }
  if (!std::isfinite(x1_0)) {
    throw std::invalid_argument("starting point must be finite");
  }
}

SkewWalk::SkewWalk(const SkewParams &params, double T, std::int64_t n_steps)
    : q_(params.q), n_steps_(n_steps) {
  params.validate();
  check_grid(T, n_steps);
  dt_ = T / static_cast<double>(n_steps);
  h_ = std::sqrt(dt_);
  up_probability_ = 0.5 * (1.0 + q_);
  start_site_ = std::llround(params.x1_0 / h_);
  snap_offset_ = position(start_site_) - params.x1_0;
}

SkewPath simulate_skew_walk(const SkewParams &params, double T,
                            std::int64_t n_steps, PathRng &rng) {
  const SkewWalk walk(params, T, n_steps);
  const auto n = static_cast<std::size_t>(n_steps);

  SkewPath path;
  path.q = params.q;
  path.dt = walk.dt();
  path.h = walk.h();
  path.x1_0 = walk.start();
  path.snap_offset = walk.snap_offset();
  path.x1.resize(n + 1);
  path.eta.resize(n + 1);
  path.w1_increments.resize(n);
  path.steps.resize(n);

  std::int64_t site = walk.start_site();
  double eta = 0.0;
  path.x1[0] = walk.position(site);
  path.eta[0] = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const int move = walk.draw(site, rng);
    double d_eta = 0.0;
    if (site == 0) {
      d_eta = walk.h();
      eta += d_eta;
    }
    site += move;
    path.steps[k] = static_cast<std::int8_t>(move);
    path.w1_increments[k] = move * walk.h() - params.q * d_eta;
    path.x1[k + 1] = walk.position(site);
    path.eta[k + 1] = eta;
  }
  return path;
}

SkewPath simulate_skew_excursion(const SkewParams &params, double T,
                                 std::int64_t n_steps, PathRng &rng) {
  params.validate();
  check_grid(T, n_steps);
  const auto n = static_cast<std::size_t>(n_steps);
  const double dt = T / static_cast<double>(n_steps);
  const double sd = std::sqrt(dt);
  const double negative_probability = 0.5 * (1.0 - params.q);

  SkewPath path;
  path.q = params.q;
  path.dt = dt;
  path.h = sd;
  path.x1_0 = params.x1_0;
  path.x1.resize(n + 1);
  path.eta.resize(n + 1);
  path.w1_increments.resize(n);

  // Reflected walk R = Y - min(0, running min Y) started at |x1_0|, local
  // time L = -min(0, running min Y). R hits 0 exactly when Y sets a new
  // nonpositive minimum.
  double y = std::abs(params.x1_0);
  double running_min = 0.0;
  double sign = params.x1_0 < 0.0 ? -1.0 : 1.0;
  double reflected = y;
  path.x1[0] = params.x1_0;
  path.eta[0] = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const bool at_zero = reflected == 0.0;
    y += sd * rng.normal();
    running_min = std::min(running_min, y);
    reflected = y - running_min;
    if (at_zero && reflected > 0.0) {
      sign = rng.uniform() < negative_probability ? -1.0 : 1.0;
    }
    path.x1[k + 1] = sign * reflected;
    path.eta[k + 1] = -running_min;
    path.w1_increments[k] = (path.x1[k + 1] - path.x1[k]) -
                            params.q * (path.eta[k + 1] - path.eta[k]);
  }
  return path;
}

double occupation_local_time(std::span<const double> x1, double dt,
                             double epsilon) {
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("occupation_local_time: epsilon must be > 0");
  }
  const auto count = std::count_if(x1.begin(), x1.end(), [epsilon](double v) {
    return std::abs(v) <= epsilon;
  });
  return dt * static_cast<double>(count) / (2.0 * epsilon);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double skew_density(double q, double t, double x, double y) {
  if (!(t > 0.0)) {
    throw std::invalid_argument("skew_density: t must be > 0");
  }
  const double sign_y = (y > 0.0) - (y < 0.0);
  return gaussian_kernel(t, y - x) +
         sign_y * q * gaussian_kernel(t, std::abs(x) + std::abs(y));
}

double skew_cdf(double q, double t, double x, double a) {
  if (!(t > 0.0)) {
    throw std::invalid_argument("skew_cdf: t must be > 0");
  }
  const double s = std::sqrt(t);
  const double ax = std::abs(x);
  double out = normal_cdf((a - x) / s) - q * normal_cdf((std::min(a, 0.0) - ax) / s);
  if (a > 0.0) {
    out += q * (normal_cdf((ax + a) / s) - normal_cdf(ax / s));
  }
  return out;
}

double skew_cdf_quadrature(double q, double t, double x, double a) {
  if (!(t > 0.0)) {
    throw std::invalid_argument("skew_cdf_quadrature: t must be > 0");
  }
  using Integrator = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double s = std::sqrt(t);
  // Mass sits around x and around the mirror point -|x| (or |x|).
  const double lo = -std::abs(x) - 8.0 * s;
  const double hi = std::abs(x) + 8.0 * s;
  const double upper = std::min(a, hi);
  if (upper <= lo) {
    return 0.0;
  }
  auto density = [&](double y) { return skew_density(q, t, x, y); };
  // The density jumps at 0 when q != 0, so integrate each side separately.
  double total = 0.0;
  if (lo < 0.0) {
    total += Integrator::integrate(density, lo, std::min(upper, 0.0), 15, 1e-14);
  }
  if (upper > 0.0) {
    total += Integrator::integrate(density, std::max(lo, 0.0), upper, 15, 1e-14);
  }
  return std::clamp(total, 0.0, 1.0);
}

double expected_local_time(double t, double x) {
  if (!(t > 0.0)) {
    throw std::invalid_argument("expected_local_time: t must be > 0");
  }
  const double ax = std::abs(x);
  return std::sqrt(2.0 * t / std::numbers::pi) * std::exp(-x * x / (2.0 * t)) -
         ax * std::erfc(ax / std::sqrt(2.0 * t));
}

} // namespace skewdiff
