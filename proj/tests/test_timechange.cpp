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

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "skewdiff/sde.hpp"
#include "skewdiff/skew_bm.hpp"
#include "skewdiff/timechange.hpp"

namespace skewdiff {
namespace {

TEST(TimeChangedNoise, FlatClockGivesZero) {
  PathRng rng(41);
  const std::vector<double> eta(50, 0.0);
  const auto noise = sample_time_changed(eta, 3, rng);
  EXPECT_EQ(noise.n_steps(), 49u);
  for (double z : noise.zeta) {
    EXPECT_EQ(z, 0.0);
  }
}

TEST(TimeChangedNoise, IdentityClockIsWiener) {
  const int n = 100, dim = 2, paths = 100000;
  const double dt = 0.01;
  std::vector<double> eta(n + 1);
  for (int k = 0; k <= n; ++k) {
    eta[k] = k * dt;
  }
  std::vector<std::vector<double>> end(dim);
  for (int p = 0; p < paths; ++p) {
    PathRng rng(stream_seed(42, p));
    const auto noise = sample_time_changed(eta, dim, rng);
    for (int i = 0; i < dim; ++i) {
      end[i].push_back(noise.zeta_at(n)(i));
    }
  }
  for (int i = 0; i < dim; ++i) {
    const auto m = moments(end[i]);
    // Var of the sample variance of N(0, T) is 2 T^2 / n.
    const double se = std::sqrt(2.0 / paths) * eta.back();
    EXPECT_NEAR(m.variance, eta.back(), 3.0 * se);
    EXPECT_LT(std::abs(m.mean), 3.0 * m.std_error);
  }
}

TEST(TimeChangedNoise, SkewClockMatchesLocalTimeMean) {
  const std::int64_t n = 2000;
  const int dim = 2, paths = 100000;
  std::vector<double> sq0, sq1;
  for (int p = 0; p < paths; ++p) {
    PathRng rng(stream_seed(43, p));
    const auto path = simulate_skew_walk({0.0, 0.0}, 1.0, n, rng);
    const auto noise = sample_time_changed(path.eta, dim, rng);
    sq0.push_back(std::pow(noise.zeta_at(n)(0), 2));
    sq1.push_back(std::pow(noise.zeta_at(n)(1), 2));
  }
  const double target = std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(moments(sq0).mean, target, 0.03 * target);
  EXPECT_NEAR(moments(sq1).mean, target, 0.03 * target);
}

TEST(TimeChangedNoise, FrozenWhileClockStops) {
  for (std::uint64_t p = 0; p < 200; ++p) {
    PathRng rng(stream_seed(44, p));
    const auto path = simulate_skew_walk({0.3, 0.0}, 1.0, 500, rng);
    const auto noise = sample_time_changed(path.eta, 2, rng);
    for (int i = 0; i < 2; ++i) {
      EXPECT_EQ(noise.zeta[i], 0.0);
    }
    for (std::size_t k = 0; k + 1 < path.eta.size(); ++k) {
      if (path.eta[k + 1] == path.eta[k]) {
        ASSERT_EQ(noise.zeta_at(k + 1), noise.zeta_at(k));
        ASSERT_EQ(noise.draws[2 * k], 0.0);
      }
    }
  }
}

TEST(TimeChangedNoise, FrozenStepsConsumeNoRandomness) {
  PathRng a(45), b(45);
  const std::vector<double> sparse = {0.0, 0.0, 0.1, 0.1, 0.1, 0.3};
  const std::vector<double> dense = {0.0, 0.1, 0.3};
  const auto na = sample_time_changed(sparse, 1, a);
  const auto nb = sample_time_changed(dense, 1, b);
  EXPECT_EQ(na.zeta.back(), nb.zeta.back());
  EXPECT_EQ(a.engine(), b.engine());
}

TEST(TimeChangedNoise, RejectsBadClock) {
  PathRng rng(46);
  EXPECT_THROW(sample_time_changed(std::vector<double>{0.0, 0.2, 0.1}, 1, rng),
               std::invalid_argument);
  EXPECT_THROW(sample_time_changed(std::vector<double>{0.1, 0.2}, 1, rng),
               std::invalid_argument);
  EXPECT_THROW(sample_time_changed(std::vector<double>{}, 1, rng),
               std::invalid_argument);
  EXPECT_THROW(sample_time_changed(std::vector<double>{0.0}, 0, rng),
               std::invalid_argument);
}

} // namespace
} // namespace skewdiff
