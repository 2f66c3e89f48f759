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

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "skewdiff/rng.hpp"

namespace skewdiff {

/*
 * zeta(t) = W(eta_t) for a Wiener process W on the tangent space that is
 * independent of eta, sampled on the grid of eta.
 *
 * Storage is row-major: zeta[k * dim + i] is coordinate i at grid index k,
 * draws[k * dim + i] is the standard normal behind step k (zero, and not
 * drawn, when eta does not move on that step).
 */
struct TimeChangedNoise {
  int dim = 0;
  std::vector<double> eta;
  std::vector<double> zeta;
  std::vector<double> draws;

  std::size_t n_steps() const { return eta.empty() ? 0 : eta.size() - 1; }
  Eigen::Map<const Eigen::VectorXd> zeta_at(std::size_t k) const {
    return {zeta.data() + k * dim, dim};
  }
};

/// One step of the time-changed noise: if d_eta > 0, fills `xi` with fresh
/// standard normals and `increment` with xi * sqrt(d_eta); otherwise sets
/// both to zero without consuming randomness.
void draw_time_changed_increment(double d_eta, std::span<double> xi,
                                 std::span<double> increment, PathRng &rng);

/// increment = xi * sqrt(d_eta), or zero when d_eta = 0. The single place
/// where draws are turned into increments, so replays are bit-identical.
void scale_time_changed_draws(double d_eta, std::span<const double> xi,
                              std::span<double> increment);

/// Samples zeta on the grid of `eta`. Requires eta[0] = 0 and eta
/// nondecreasing; throws std::invalid_argument otherwise.
TimeChangedNoise sample_time_changed(std::span<const double> eta, int dim,
                                     PathRng &rng);

} // namespace skewdiff
