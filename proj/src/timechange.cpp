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

#include "skewdiff/timechange.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace skewdiff {

void scale_time_changed_draws(double d_eta, std::span<const double> xi,
                              std::span<double> increment) {
  if (d_eta > 0.0) {
    const double scale = std::sqrt(d_eta);
    for (std::size_t i = 0; i < xi.size(); ++i) {
      increment[i] = xi[i] * scale;
    }
  } else {
    std::fill(increment.begin(), increment.end(), 0.0);
  }
}

void draw_time_changed_increment(double d_eta, std::span<double> xi,
                                 std::span<double> increment, PathRng &rng) {
  if (d_eta > 0.0) {
    for (auto &v : xi) {
      v = rng.normal();
    }
  } else {
    std::fill(xi.begin(), xi.end(), 0.0);
  }
  scale_time_changed_draws(d_eta, xi, increment);
}

TimeChangedNoise sample_time_changed(std::span<const double> eta, int dim,
                                     PathRng &rng) {
  if (dim < 1) {
    throw std::invalid_argument("sample_time_changed: dim must be >= 1");
  }
  if (eta.empty() || eta[0] != 0.0) {
    throw std::invalid_argument("sample_time_changed: eta must start at 0");
  }
  for (std::size_t k = 1; k < eta.size(); ++k) {
    if (!(eta[k] >= eta[k - 1])) {
      throw std::invalid_argument(
          "sample_time_changed: eta must be nondecreasing (index " +
          std::to_string(k) + ")");
    }
  }

  const auto d = static_cast<std::size_t>(dim);
  const std::size_t n = eta.size() - 1;
  TimeChangedNoise out;
  out.dim = dim;
  out.eta.assign(eta.begin(), eta.end());
  out.zeta.assign((n + 1) * d, 0.0);
  out.draws.assign(n * d, 0.0);

  std::vector<double> increment(d);
  for (std::size_t k = 0; k < n; ++k) {
    draw_time_changed_increment(eta[k + 1] - eta[k],
                                std::span(out.draws).subspan(k * d, d),
                                increment, rng);
    for (std::size_t i = 0; i < d; ++i) {
      out.zeta[(k + 1) * d + i] = out.zeta[k * d + i] + increment[i];
    }
  }
  return out;
}

} // namespace skewdiff
