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

#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "skewdiff/geometry.hpp"

namespace skewdiff {
namespace {

VectorXd random_vector(std::mt19937_64 &gen, int n) {
  std::normal_distribution<double> nd;
  VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    v(i) = nd(gen);
  }
  return v;
}

TEST(HyperplaneFrame, AxisFrameProjectsOntoCoordinates) {
  const auto frame = HyperplaneFrame::axis(2);
  const auto parts = project(frame, VectorXd{{3.0, 4.0}});
  EXPECT_EQ(parts.x1, 3.0);
  ASSERT_EQ(parts.xS.size(), 1);
  EXPECT_EQ(parts.xS(0), 4.0);
}

TEST(HyperplaneFrame, NormalDirectionHasNoTangentialPart) {
  std::mt19937_64 gen(11);
  for (int d = 2; d <= 6; ++d) {
    const HyperplaneFrame frame(random_vector(gen, d));
    const auto parts = project(frame, frame.normal());
    EXPECT_NEAR(parts.x1, 1.0, 1e-12);
    EXPECT_LT(parts.xS.norm(), 1e-12);
  }
}

TEST(HyperplaneFrame, BasisIsOrthonormal) {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + trial % 5;
    const HyperplaneFrame frame(random_vector(gen, d));
    EXPECT_NEAR(frame.normal().norm(), 1.0, 1e-12);
    const MatrixXd &b = frame.tangent_basis();
    const MatrixXd gram = b.transpose() * b;
    EXPECT_LT((gram - MatrixXd::Identity(d - 1, d - 1)).cwiseAbs().maxCoeff(),
              1e-12);
    EXPECT_LT((b.transpose() * frame.normal()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(HyperplaneFrame, ProjectEmbedRoundTrip) {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 500; ++trial) {
    const int d = 2 + trial % 6;
    const HyperplaneFrame frame(random_vector(gen, d));
    const VectorXd x = 10.0 * random_vector(gen, d);
    const auto parts = project(frame, x);
    EXPECT_NEAR(parts.x1, x.dot(frame.normal()), 1e-12 * (1.0 + x.norm()));
    EXPECT_LT((embed(frame, parts.x1, parts.xS) - x).norm(), 1e-12 * (1.0 + x.norm()));

    const double x1 = 3.0 * random_vector(gen, 1)(0);
    const VectorXd xS = 3.0 * random_vector(gen, d - 1);
    const auto back = project(frame, embed(frame, x1, xS));
    EXPECT_NEAR(back.x1, x1, 1e-12 * (1.0 + std::abs(x1)));
    EXPECT_LT((back.xS - xS).norm(), 1e-12 * (1.0 + xS.norm()));
  }
}

TEST(HyperplaneFrame, EmbedSpecialValues) {
  const HyperplaneFrame frame(VectorXd{{1.0, 2.0, -2.0}});
  EXPECT_EQ(embed(frame, 0.0, VectorXd::Zero(2)), VectorXd::Zero(3));
  EXPECT_LT((embed(frame, 1.0, VectorXd::Zero(2)) - frame.normal()).norm(), 1e-15);
}

TEST(HyperplaneFrame, RejectsBadInput) {
  EXPECT_THROW(HyperplaneFrame::axis(1), std::invalid_argument);
  EXPECT_THROW(HyperplaneFrame(VectorXd::Zero(3)), std::invalid_argument);
  const auto frame = HyperplaneFrame::axis(3);
  EXPECT_THROW(project(frame, VectorXd::Zero(2)), std::invalid_argument);
  EXPECT_THROW(embed(frame, 0.0, VectorXd::Zero(3)), std::invalid_argument);
}

TEST(PsdSqrt, KnownMatrices) {
  EXPECT_LT((psd_sqrt(MatrixXd::Identity(3, 3)) - MatrixXd::Identity(3, 3))
                .norm(),
            1e-14);
  MatrixXd d = MatrixXd::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 9.0;
  MatrixXd expected = MatrixXd::Zero(2, 2);
  expected(0, 0) = 2.0;
  expected(1, 1) = 3.0;
  EXPECT_LT((psd_sqrt(d) - expected).norm(), 1e-14);
  EXPECT_EQ(psd_sqrt(MatrixXd::Zero(2, 2)), MatrixXd::Zero(2, 2));
}

TEST(PsdSqrt, SquaresBackToInput) {
  std::mt19937_64 gen(14);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 6;
    const int rank = 1 + trial % n; // includes singular matrices
    const MatrixXd m = oracle::random_psd(gen, n, rank);
    const MatrixXd r = psd_sqrt(m);
    EXPECT_LT((r * r - m).norm(), 1e-8);
    EXPECT_LT((r - r.transpose()).cwiseAbs().maxCoeff(), 1e-14);

    // Eigenvalues of the root are the roots of the eigenvalues.
    Eigen::SelfAdjointEigenSolver<MatrixXd> em(m), er(r);
    for (int i = 0; i < n; ++i) {
      EXPECT_GE(er.eigenvalues()(i), -1e-8);
      EXPECT_NEAR(er.eigenvalues()(i),
                  std::sqrt(std::max(0.0, em.eigenvalues()(i))), 1e-8);
    }
  }
}

TEST(PsdSqrt, ClampsTinyNegativeEigenvalues) {
  MatrixXd m = MatrixXd::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = -1e-12;
  const MatrixXd r = psd_sqrt(m);
  EXPECT_NEAR(r(0, 0), 1.0, 1e-15);
  EXPECT_EQ(r(1, 1), 0.0);
}

TEST(PsdSqrt, RejectsAsymmetricOrIndefinite) {
  MatrixXd asym{{1.0, 0.5}, {0.0, 1.0}};
  EXPECT_THROW(psd_sqrt(asym), std::invalid_argument);
  MatrixXd indef{{1.0, 0.0}, {0.0, -1e-6}};
  EXPECT_THROW(psd_sqrt(indef), std::invalid_argument);
  EXPECT_THROW(psd_sqrt(MatrixXd::Zero(2, 3)), std::invalid_argument);
}

TEST(CheckCoefficients, ConstantFieldHasZeroQuotient) {
  const VectorXd a{{0.3, -0.4}};
  MatrixXd b{{4.0, 0.0}, {0.0, 1.0}};
  const CoefficientField field(ConstantFamily{a, b});
  EXPECT_DOUBLE_EQ(field.analytic_bound(), 0.5 + 2.0);
  const auto report = check_coefficients(field, 500, 3.0, 1);
  EXPECT_EQ(report.max_lipschitz_ratio, 0.0);
  EXPECT_NEAR(report.max_bound, 2.5, 1e-12);
  EXPECT_TRUE(report.pass());
}

TEST(CheckCoefficients, ClampedLinearSlopeAboveDeclaredFails) {
  ClampedLinearFamily family{MatrixXd::Identity(1, 1) * 2.0, VectorXd::Zero(1),
                             5.0, MatrixXd::Zero(1, 1)};
  const CoefficientField honest(family);
  EXPECT_DOUBLE_EQ(honest.analytic_lipschitz(), 2.0);
  EXPECT_TRUE(check_coefficients(honest, 1000, 2.0, 2).pass());

  const CoefficientField understated(family, std::nullopt, 1.0);
  const auto report = check_coefficients(understated, 1000, 2.0, 2);
  EXPECT_FALSE(report.lipschitz_ok);
  EXPECT_FALSE(report.pass());
  EXPECT_GT(report.max_lipschitz_ratio, 1.9);
}

TEST(CheckCoefficients, ClampKeepsAlphaInsideBall) {
  ClampedLinearFamily family{MatrixXd::Identity(2, 2) * 3.0, VectorXd{{1.0, 0.0}},
                             0.75, MatrixXd::Identity(2, 2) * 0.25};
  const CoefficientField field(family);
  EXPECT_NEAR(field.alpha(VectorXd{{10.0, 10.0}}).norm(), 0.75, 1e-15);
  EXPECT_NEAR(field.alpha(VectorXd{{-0.3, 0.1}})(1), 0.3, 1e-15);
  EXPECT_TRUE(check_coefficients(field, 2000, 4.0, 3).pass());
}

TEST(CheckCoefficients, RadialBumpBoundMatchesDenseGrid) {
  RadialBumpFamily family{VectorXd{{0.2, -0.1}}, 1.5, 3, VectorXd{{0.6, 0.8}},
                          MatrixXd{{0.81, 0.0}, {0.0, 0.25}}};
  const CoefficientField field(family);

  // Dense-grid oracle for max |alpha| + ||beta^{1/2}||, evaluated straight
  // from the family definition.
  double grid_max = 0.0;
  for (int i = -200; i <= 200; ++i) {
    for (int j = -200; j <= 200; ++j) {
      const double x = 0.01 * i, y = 0.01 * j;
      const double r2 = (x - 0.2) * (x - 0.2) + (y + 0.1) * (y + 0.1);
      const double u = std::max(0.0, 1.0 - r2 / 2.25);
      const double psi = u * u * u;
      grid_max = std::max(grid_max, psi * 1.0 + psi * 0.9);
    }
  }
  EXPECT_NEAR(grid_max, field.analytic_bound(), 1e-9);

  const auto report = check_coefficients(field, 20000, 2.0, 4);
  EXPECT_TRUE(report.pass());
  EXPECT_LE(report.max_bound, grid_max * (1.0 + 1e-12));
  EXPECT_GE(report.max_bound, 0.95 * grid_max);
}

TEST(CheckCoefficients, RadialBumpSlopeIsSharp) {
  // The sampled quotient should approach the analytic Lipschitz constant.
  RadialBumpFamily family{VectorXd::Zero(1), 1.0, 2, VectorXd::Ones(1),
                          MatrixXd::Zero(1, 1)};
  const CoefficientField field(family);
  // psi(r) = (1 - r^2)^2, |psi'| peaks at r^2 = 1/3: 4 r (1 - r^2).
  const double expected = 4.0 / std::sqrt(3.0) * (2.0 / 3.0);
  EXPECT_NEAR(field.analytic_lipschitz(), expected, 1e-12);
  const auto report = check_coefficients(field, 20000, 1.2, 5);
  EXPECT_TRUE(report.pass());
  EXPECT_GT(report.max_lipschitz_ratio, 0.95 * expected);
}

TEST(CheckCoefficients, BuiltInFamiliesPassWithTheirConstants) {
  std::mt19937_64 gen(15);
  for (int m = 1; m <= 3; ++m) {
    const MatrixXd b = oracle::random_psd(gen, m);
    VectorXd a = VectorXd::Constant(m, 0.4);
    std::vector<CoefficientField> fields = {
        CoefficientField(ConstantFamily{a, b}),
        CoefficientField(ClampedLinearFamily{oracle::random_psd(gen, m), a, 1.3, b}),
        CoefficientField(RadialBumpFamily{a, 0.8, 1, a, b}),
        CoefficientField(RadialBumpFamily{VectorXd::Zero(m), 2.0, 4, a, b}),
    };
    for (const auto &f : fields) {
      EXPECT_TRUE(check_coefficients(f, 3000, 3.0, 6).pass()) << f.family_name();
    }
  }
}

TEST(CheckCoefficients, RejectsTooFewSamples) {
  EXPECT_THROW(check_coefficients(CoefficientField::zero(1), 1, 1.0, 0),
               std::invalid_argument);
}

} // namespace
} // namespace skewdiff
