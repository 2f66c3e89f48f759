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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "skewdiff/rng.hpp"

namespace skewdiff {

/// Skewness q in [-1, 1] and the starting point on the normal line.
struct SkewParams {
  double q = 0.0;
  double x1_0 = 0.0;

  /// Throws std::invalid_argument unless |q| <= 1 and x1_0 is finite.
  void validate() const;
};

/*
 * One simulated path of skew Brownian motion with its symmetric local time
 * at 0, on the grid t_k = k * dt, k = 0..n.
 *
 * `w1_increments[k]` is the driving increment over step k, defined so that
 * x1[k] = x1_0 + q * eta[k] + sum_{j<k} w1_increments[j]. For the walk
 * scheme `steps` keeps the lattice moves (+1 / -1) so the path can be
 * replayed; the excursion scheme leaves it empty.
 */
struct SkewPath {
  double q = 0.0;
  double dt = 0.0;
  double h = 0.0;           ///< lattice spacing sqrt(dt) (walk scheme)
  double x1_0 = 0.0;        ///< starting point actually used (after snapping)
  double snap_offset = 0.0; ///< x1_0 - requested starting point
  std::vector<double> x1;
  std::vector<double> eta;
  std::vector<double> w1_increments;
  std::vector<std::int8_t> steps;

  std::size_t n_steps() const { return w1_increments.size(); }
};

/*
 * Scaled skew random walk, the stepping kernel shared by every walk-based
 * simulation in the library. State is an integer lattice site; x1 = site * h
 * with h = sqrt(T / n_steps). From site 0 the walk steps up with probability
 * (1 + q) / 2 and the local time grows by h; elsewhere it is symmetric.
 */
class SkewWalk {
public:
  SkewWalk(const SkewParams &params, double T, std::int64_t n_steps);

  double dt() const { return dt_; }
  double h() const { return h_; }
  double q() const { return q_; }
  std::int64_t n_steps() const { return n_steps_; }
  std::int64_t start_site() const { return start_site_; }
  double start() const { return static_cast<double>(start_site_) * h_; }
  double snap_offset() const { return snap_offset_; }

  /// Lattice move (+1 or -1) out of `site`.
  int draw(std::int64_t site, PathRng &rng) const {
    if (site == 0) {
      return rng.uniform() < up_probability_ ? 1 : -1;
    }
    return rng.coin() ? 1 : -1;
  }

  double position(std::int64_t site) const {
    return static_cast<double>(site) * h_;
  }

private:
  double q_;
  double dt_;
  double h_;
  double up_probability_;
  std::int64_t n_steps_;
  std::int64_t start_site_;
  double snap_offset_;
};

/// Primary scheme: skew random walk with exact local-time bookkeeping.
SkewPath simulate_skew_walk(const SkewParams &params, double T,
                            std::int64_t n_steps, PathRng &rng);

/// Cross-validation scheme: Levy transform of a Gaussian walk (reflected
/// path and running-minimum local time) with random excursion signs.
SkewPath simulate_skew_excursion(const SkewParams &params, double T,
                                 std::int64_t n_steps, PathRng &rng);

/// (1 / 2 eps) * dt * #{k : |x1[k]| <= eps}.
double occupation_local_time(std::span<const double> x1, double dt,
                             double epsilon);

/// Transition density of skew Brownian motion:
/// phi_t(y - x) + sign(y) q phi_t(|x| + |y|).
double skew_density(double q, double t, double x, double y);

/// P(x1(t) <= a | x1(0) = x), closed form obtained by integrating
/// `skew_density`.
double skew_cdf(double q, double t, double x, double a);

/// Same quantity by adaptive Gauss-Kronrod quadrature of `skew_density`
/// with tails truncated at 8 standard deviations.
double skew_cdf_quadrature(double q, double t, double x, double a);

/// E eta_t for a start at x. The local time at 0 has the same mean for
/// every q: sqrt(2t/pi) exp(-x^2/2t) - |x| erfc(|x| / sqrt(2t)).
double expected_local_time(double t, double x);

/// Standard normal CDF.
double normal_cdf(double z);

} // namespace skewdiff
