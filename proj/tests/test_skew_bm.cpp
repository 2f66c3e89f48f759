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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "skewdiff/sde.hpp"
#include "skewdiff/skew_bm.hpp"

namespace skewdiff {
namespace {

const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

double mean(const std::vector<double> &v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Plain KS distance with ties handled through the right-continuous ECDF.
template <typename Cdf> double ks(std::vector<double> v, Cdf &&cdf) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = cdf(v[i]);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

TEST(SkewWalk, SymmetricWalkIsCentered) {
  const std::int64_t obs[] = {1000};
  const auto s = skew_ensemble({0.0, 0.0}, 1.0, 1000, 100000, 21, obs);
  const auto x = s.x1_column(0);
  const auto m = moments(x);
  EXPECT_LT(std::abs(m.mean), 3.0 * m.std_error);
  EXPECT_NEAR(m.variance, 1.0, 0.02);
}

TEST(SkewWalk, FullReflectionStaysNonnegative) {
  for (std::uint64_t p = 0; p < 1000; ++p) {
    PathRng rng(stream_seed(22, p));
    const auto path = simulate_skew_walk({1.0, 0.0}, 1.0, 2000, rng);
    ASSERT_GE(*std::min_element(path.x1.begin(), path.x1.end()), 0.0);
  }
}

TEST(SkewWalk, LocalTimeMatchesAbsoluteGaussianMean) {
  const std::int64_t obs[] = {10000};
  const auto s = skew_ensemble({0.0, 0.0}, 1.0, 10000, 100000, 23, obs);
  EXPECT_NEAR(mean(s.eta_column(0)), kSqrt2OverPi, 0.025 * kSqrt2OverPi);
}

TEST(SkewWalk, LocalTimeMeanDoesNotDependOnSkewness) {
  const std::int64_t obs[] = {4000};
  for (double q : {-0.6, 0.4, 0.9}) {
    for (double x0 : {0.0, 0.5}) {
      const auto s = skew_ensemble({q, x0}, 1.0, 4000, 40000, 24, obs);
      const auto m = moments(s.eta_column(0));
      const double target = expected_local_time(1.0, x0);
      EXPECT_NEAR(m.mean, target, 4.0 * m.std_error + 0.02 * target)
          << "q=" << q << " x0=" << x0;
    }
  }
}

TEST(SkewWalk, GridIdentityAndMonotoneLocalTime) {
  for (std::uint64_t p = 0; p < 200; ++p) {
    PathRng rng(stream_seed(25, p));
    const double q = -1.0 + 0.01 * static_cast<double>(p);
    const auto path = simulate_skew_walk({q, 0.137}, 2.0, 500, rng);
    EXPECT_EQ(path.eta[0], 0.0);
    EXPECT_NEAR(path.snap_offset, path.x1_0 - 0.137, 1e-15);
    EXPECT_LE(std::abs(path.snap_offset), 0.5 * path.h + 1e-15);
    double w = 0.0;
    for (std::size_t k = 0; k <= path.n_steps(); ++k) {
      if (k > 0) {
        ASSERT_GE(path.eta[k], path.eta[k - 1]);
        // Local time moves only out of the origin.
        if (path.eta[k] > path.eta[k - 1]) {
          ASSERT_EQ(path.x1[k - 1], 0.0);
        }
        w += path.w1_increments[k - 1];
      }
      ASSERT_NEAR(path.x1[k], path.x1_0 + q * path.eta[k] + w, 1e-12);
    }
  }
}

TEST(SkewWalk, RejectsBadInput) {
  PathRng rng(1);
  EXPECT_THROW(simulate_skew_walk({0.0, 0.0}, 1.0, 0, rng), std::invalid_argument);
  EXPECT_THROW(simulate_skew_walk({0.0, 0.0}, 0.0, 10, rng), std::invalid_argument);
  EXPECT_THROW(simulate_skew_walk({1.5, 0.0}, 1.0, 10, rng), std::invalid_argument);
  EXPECT_THROW(simulate_skew_excursion({0.0, 0.0}, -1.0, 10, rng),
               std::invalid_argument);
}

TEST(SkewExcursion, SymmetricCaseIsGaussian) {
  const std::int64_t obs[] = {10000};
  const auto s = skew_ensemble({0.0, 0.0}, 1.0, 10000, 100000, 26, obs, 1,
                               SkewScheme::excursion);
  EXPECT_LT(ks(s.x1_column(0), oracle::phi_cdf), 0.01);
}

TEST(SkewExcursion, FullReflectionIsReflectedPath) {
  for (std::uint64_t p = 0; p < 200; ++p) {
    PathRng rng(stream_seed(27, p));
    const auto path = simulate_skew_excursion({1.0, 0.3}, 1.0, 1000, rng);
    // With no flips x1 = |x1_0| + sum(w) + eta, which is the Levy transform.
    double w = 0.0;
    for (std::size_t k = 0; k <= path.n_steps(); ++k) {
      if (k > 0) {
        w += path.w1_increments[k - 1];
        ASSERT_GE(path.eta[k], path.eta[k - 1]);
      }
      ASSERT_GE(path.x1[k], 0.0);
      ASSERT_NEAR(path.x1[k], 0.3 + w + path.eta[k], 1e-12);
    }
  }
}

TEST(SkewExcursion, AgreesWithWalkOnLocalTime) {
  const std::int64_t obs[] = {4000};
  const auto walk = skew_ensemble({0.5, 0.0}, 1.0, 4000, 50000, 28, obs);
  const auto exc = skew_ensemble({0.5, 0.0}, 1.0, 4000, 50000, 29, obs, 1,
                                 SkewScheme::excursion);
  const double a = mean(walk.eta_column(0));
  const double b = mean(exc.eta_column(0));
  EXPECT_NEAR(a, b, 0.02 * a);
}

TEST(SkewExcursion, SplitMatchesSkewness) {
  const std::int64_t obs[] = {2001};
  const auto s = skew_ensemble({0.5, 0.0}, 1.0, 2001, 50000, 30, obs, 1,
                               SkewScheme::excursion);
  const auto x = s.x1_column(0);
  const double pos =
      static_cast<double>(std::count_if(x.begin(), x.end(), [](double v) { return v > 0; })) /
      static_cast<double>(x.size());
  EXPECT_NEAR(pos, 0.75, 0.01);
}

TEST(OccupationLocalTime, SpecExamples) {
  EXPECT_EQ(occupation_local_time(std::vector<double>(101, 5.0), 0.01, 0.1), 0.0);
  EXPECT_NEAR(occupation_local_time(std::vector<double>(101, 0.0), 0.01, 0.5),
              1.01, 1e-14);
  EXPECT_THROW(occupation_local_time(std::vector<double>(3, 0.0), 0.01, 0.0),
               std::invalid_argument);
}

TEST(OccupationLocalTime, TracksWalkLocalTimeOnTheLattice) {
  // On the lattice |x| <= 2h counts 5 sites spread over a 4h window, so the
  // estimator sits near 5/4 of eta; at 2.5h the window is 5h and the ratio
  // is close to 1. Near the origin each site collects about eta * h / dt
  // visits, i.e. occupation time eta * h per site.
  double eta_sum = 0.0, occ2 = 0.0, occ25 = 0.0;
  for (std::uint64_t p = 0; p < 10000; ++p) {
    PathRng rng(stream_seed(31, p));
    const auto path = simulate_skew_walk({0.0, 0.0}, 1.0, 10000, rng);
    eta_sum += path.eta.back();
    occ2 += occupation_local_time(path.x1, path.dt, 2.0 * path.h);
    occ25 += occupation_local_time(path.x1, path.dt, 2.5 * path.h);
  }
  EXPECT_NEAR(occ2 / eta_sum, 1.25, 0.1 * 1.25);
  EXPECT_NEAR(occ25 / eta_sum, 1.0, 0.1);
}

TEST(SkewDensity, SymmetricCaseIsGaussian) {
  for (double x : {-1.0, 0.0, 0.7}) {
    for (double y : {-2.0, -0.1, 0.3, 1.5}) {
      EXPECT_NEAR(skew_density(0.0, 0.8, x, y), oracle::gauss(0.8, y - x), 1e-15);
    }
  }
  EXPECT_THROW(skew_density(0.0, 0.0, 0.0, 1.0), std::invalid_argument);
}

TEST(SkewDensity, NormalizesAndSplitsMass) {
  for (double q : {-1.0, -0.5, 0.0, 0.3, 0.5, 1.0}) {
    for (double t : {0.2, 1.0}) {
      for (double x : {-0.8, 0.0, 0.4}) {
        const double L = std::abs(x) + 12.0 * std::sqrt(t);
        EXPECT_NEAR(oracle::skew_mass(q, t, x, -L, L), 1.0, 1e-8)
            << q << " " << t << " " << x;
        for (double y = -L; y <= L; y += 0.05) {
          EXPECT_GE(skew_density(q, t, x, y), -1e-15);
        }
      }
    }
  }
  EXPECT_NEAR(oracle::skew_mass(0.5, 1.0, 0.0, 0.0, 12.0), 0.75, 1e-8);
}

TEST(SkewDensity, ChapmanKolmogorov) {
  for (double q : {0.5, -0.3}) {
    for (double x : {-1.0, 0.0, 0.5}) {
      for (double y : {-1.0, -0.2, 0.4, 1.2}) {
        auto g = [&](double z, int side) {
          return oracle::skew_density_side(q, 0.5, x, z, side) *
                 skew_density(q, 0.5, z, y);
        };
        const double comp =
            oracle::simpson([&](double z) { return g(z, -1); }, -12.0, 0.0, 6000) +
            oracle::simpson([&](double z) { return g(z, 1); }, 0.0, 12.0, 6000);
        EXPECT_NEAR(comp, skew_density(q, 1.0, x, y), 1e-6);
      }
    }
  }
}

TEST(SkewCdf, ClosedFormMatchesQuadratureAndSimpson) {
  for (double q : {-1.0, -0.5, 0.0, 0.5, 0.8, 1.0}) {
    for (double x : {-0.7, 0.0, 0.3}) {
      for (double a : {-1.5, -0.2, 0.0, 0.1, 1.0}) {
        const double closed = skew_cdf(q, 1.0, x, a);
        EXPECT_NEAR(closed, skew_cdf_quadrature(q, 1.0, x, a), 1e-10);
        EXPECT_NEAR(closed, oracle::skew_mass(q, 1.0, x, -14.0, a), 1e-9);
      }
    }
  }
}

TEST(ExpectedLocalTime, MatchesIntegratedDensityAtZero) {
  // E eta_t(x) = integral_0^t p_s(x, 0) ds for the symmetric normalization.
  for (double x : {0.0, 0.2, -0.9}) {
    for (double t : {0.5, 1.0, 2.0}) {
      // Substituting s = u^2 removes the 1/sqrt(s) singularity:
      // 2u p_{u^2}(x, 0) = sqrt(2/pi) exp(-x^2 / 2u^2).
      auto integrand = [&](double u) {
        if (u == 0.0) {
          return x == 0.0 ? kSqrt2OverPi : 0.0;
        }
        return kSqrt2OverPi * std::exp(-x * x / (2.0 * u * u));
      };
      const double numeric = oracle::simpson(integrand, 0.0, std::sqrt(t), 4000);
      EXPECT_NEAR(expected_local_time(t, x), numeric, 1e-9) << x << " " << t;
    }
  }
  EXPECT_NEAR(expected_local_time(1.0, 0.0), kSqrt2OverPi, 1e-15);
}

} // namespace
} // namespace skewdiff
