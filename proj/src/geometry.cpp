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

#include "skewdiff/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "skewdiff/rng.hpp"

namespace skewdiff {

namespace {

constexpr double kSymmetryTol = 1e-10;
constexpr double kEigenClamp = 1e-10;
constexpr double kCheckSlack = 1e-9;

void require_square(const MatrixXd &m, int n, const char *what) {
  if (m.rows() != n || m.cols() != n) {
    throw std::invalid_argument(std::string(what) + ": expected a " +
                                std::to_string(n) + "x" + std::to_string(n) +
                                " matrix");
  }
}

void require_length(const VectorXd &v, int n, const char *what) {
  if (v.size() != n) {
    throw std::invalid_argument(std::string(what) + ": expected length " +
                                std::to_string(n) + ", got " +
                                std::to_string(v.size()));
  }
}

} // namespace

// ---------------------------------------------------------------------------
// HyperplaneFrame

HyperplaneFrame HyperplaneFrame::axis(int dim) {
  if (dim < 2) {
    throw std::invalid_argument("hyperplane frame needs dimension >= 2");
  }
  VectorXd e1 = VectorXd::Zero(dim);
  e1(0) = 1.0;
  return HyperplaneFrame(e1);
}

HyperplaneFrame::HyperplaneFrame(const VectorXd &normal) {
  const int d = static_cast<int>(normal.size());
  if (d < 2) {
    throw std::invalid_argument("hyperplane frame needs dimension >= 2");
  }
  const double norm = normal.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw std::invalid_argument("hyperplane normal must be finite and nonzero");
  }
  normal_ = normal / norm;

  Eigen::Index skip = 0;
  normal_.cwiseAbs().maxCoeff(&skip);

  basis_.resize(d, d - 1);
  int col = 0;
  for (int i = 0; i < d; ++i) {
    if (i == skip) {
      continue;
    }
    VectorXd v = VectorXd::Unit(d, i);
    // Two Gram-Schmidt passes keep orthogonality at machine precision.
    for (int pass = 0; pass < 2; ++pass) {
      v -= normal_.dot(v) * normal_;
      for (int j = 0; j < col; ++j) {
        v -= basis_.col(j).dot(v) * basis_.col(j);
      }
    }
    basis_.col(col++) = v / v.norm();
  }
}

Decomposition project(const HyperplaneFrame &frame, const VectorXd &x) {
  require_length(x, frame.dim(), "project");
  return {frame.normal().dot(x), frame.tangent_basis().transpose() * x};
}

VectorXd embed(const HyperplaneFrame &frame, double x1, const VectorXd &xS) {
  require_length(xS, frame.tangent_dim(), "embed");
  return x1 * frame.normal() + frame.tangent_basis() * xS;
}

// ---------------------------------------------------------------------------
// Matrix square root

MatrixXd psd_sqrt(const MatrixXd &m) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument("psd_sqrt: matrix is not square");
  }
  if (m.size() == 0) {
    return m;
  }
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (!(asym <= kSymmetryTol)) {
    throw std::invalid_argument("psd_sqrt: matrix is not symmetric");
  }
  const MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) {
    throw std::invalid_argument("psd_sqrt: eigendecomposition failed");
  }
  VectorXd values = eig.eigenvalues();
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values(i) < -kEigenClamp) {
      throw std::invalid_argument("psd_sqrt: matrix is indefinite");
    }
    values(i) = std::sqrt(std::max(values(i), 0.0));
  }
  const MatrixXd &vectors = eig.eigenvectors();
  MatrixXd root = vectors * values.asDiagonal() * vectors.transpose();
  return 0.5 * (root + root.transpose());
}

double symmetric_norm(const MatrixXd &m) {
  if (m.size() == 0) {
    return 0.0;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Coefficient families

double bump_profile(double squared_distance, double radius, int power) {
  const double u = 1.0 - squared_distance / (radius * radius);
  if (u <= 0.0) {
    return 0.0;
  }
  double out = 1.0;
  for (int i = 0; i < power; ++i) {
    out *= u;
  }
  return out;
}

double bump_profile_max_slope(double radius, int power) {
  // d/drho (1 - rho^2/r^2)^p peaks at rho^2 = r^2 / (2p - 1).
  const double p = power;
  const double s2 = 1.0 / (2.0 * p - 1.0);
  return (2.0 * p / radius) * std::sqrt(s2) * std::pow(1.0 - s2, p - 1.0);
}

CoefficientField::CoefficientField(CoefficientFamily family,
                                   std::optional<double> declared_bound,
                                   std::optional<double> declared_lipschitz)
    : family_(std::move(family)) {
  std::visit(
      [this](const auto &f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, ConstantFamily>) {
          tangent_dim_ = static_cast<int>(f.alpha.size());
          require_square(f.beta, tangent_dim_, "constant family beta");
          sqrt_beta_ = psd_sqrt(f.beta);
          analytic_bound_ = f.alpha.norm() + symmetric_norm(sqrt_beta_);
          analytic_lipschitz_ = 0.0;
          is_zero_ = f.alpha.isZero(0.0) && f.beta.isZero(0.0);
        } else if constexpr (std::is_same_v<F, ClampedLinearFamily>) {
          tangent_dim_ = static_cast<int>(f.offset.size());
          require_square(f.slope, tangent_dim_, "clamped-linear slope");
          require_square(f.beta, tangent_dim_, "clamped-linear beta");
          if (!(f.alpha_radius > 0.0)) {
            throw std::invalid_argument(
                "clamped-linear family needs a positive clamp radius");
          }
          sqrt_beta_ = psd_sqrt(f.beta);
          analytic_bound_ = f.alpha_radius + symmetric_norm(sqrt_beta_);
          Eigen::JacobiSVD<MatrixXd> svd(f.slope);
          analytic_lipschitz_ = svd.singularValues()(0);
        } else {
          tangent_dim_ = static_cast<int>(f.center.size());
          require_length(f.alpha_direction, tangent_dim_,
                         "radial bump alpha direction");
          require_square(f.beta, tangent_dim_, "radial bump beta");
          if (!(f.radius > 0.0) || f.power < 1) {
            throw std::invalid_argument(
                "radial bump family needs radius > 0 and power >= 1");
          }
          sqrt_beta_ = psd_sqrt(f.beta);
          const double a = f.alpha_direction.norm();
          const double b = symmetric_norm(sqrt_beta_);
          analytic_bound_ = a + b;
          analytic_lipschitz_ =
              bump_profile_max_slope(f.radius, f.power) * std::hypot(a, b);
          is_zero_ = f.alpha_direction.isZero(0.0) && f.beta.isZero(0.0);
        }
      },
      family_);
  if (tangent_dim_ < 1) {
    throw std::invalid_argument("coefficient field needs tangent dimension >= 1");
  }
  bound_ = declared_bound.value_or(analytic_bound_);
  lipschitz_ = declared_lipschitz.value_or(analytic_lipschitz_);
  if (!(bound_ > 0.0) && !is_zero_) {
    throw std::invalid_argument("coefficient bound K must be positive");
  }
}

CoefficientField CoefficientField::zero(int tangent_dim) {
  return CoefficientField(ConstantFamily{VectorXd::Zero(tangent_dim),
                                         MatrixXd::Zero(tangent_dim, tangent_dim)});
}

std::string CoefficientField::family_name() const {
  switch (family_.index()) {
  case 0:
    return "constant";
  case 1:
    return "clamped_linear";
  default:
    return "radial_bump";
  }
}

double CoefficientField::profile(const VectorXd &xS) const {
  const auto &f = std::get<RadialBumpFamily>(family_);
  return bump_profile((xS - f.center).squaredNorm(), f.radius, f.power);
}

VectorXd CoefficientField::alpha(const VectorXd &xS) const {
  require_length(xS, tangent_dim_, "alpha");
  return std::visit(
      [&](const auto &f) -> VectorXd {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, ConstantFamily>) {
          return f.alpha;
        } else if constexpr (std::is_same_v<F, ClampedLinearFamily>) {
          VectorXd v = f.slope * xS + f.offset;
          const double n = v.norm();
          if (n > f.alpha_radius) {
            v *= f.alpha_radius / n;
          }
          return v;
        } else {
          return profile(xS) * f.alpha_direction;
        }
      },
      family_);
}

MatrixXd CoefficientField::sqrt_beta(const VectorXd &xS) const {
  require_length(xS, tangent_dim_, "sqrt_beta");
  if (std::holds_alternative<RadialBumpFamily>(family_)) {
    return profile(xS) * sqrt_beta_;
  }
  return sqrt_beta_;
}

MatrixXd CoefficientField::beta(const VectorXd &xS) const {
  const MatrixXd root = sqrt_beta(xS);
  return root * root;
}

void CoefficientField::surface_increment(const VectorXd &xS, double d_eta,
                                         const VectorXd &zeta_increment,
                                         VectorXd &out) const {
  std::visit(
      [&](const auto &f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, ConstantFamily>) {
          out.noalias() = f.alpha * d_eta;
          out.noalias() += sqrt_beta_ * zeta_increment;
        } else if constexpr (std::is_same_v<F, ClampedLinearFamily>) {
          out.noalias() = alpha(xS) * d_eta;
          out.noalias() += sqrt_beta_ * zeta_increment;
        } else {
          const double psi = profile(xS);
          out.noalias() = f.alpha_direction * (psi * d_eta);
          out.noalias() += (psi * sqrt_beta_) * zeta_increment;
        }
      },
      family_);
}

// ---------------------------------------------------------------------------
// check_coefficients

namespace {

VectorXd uniform_in_ball(PathRng &rng, int dim, double radius) {
  VectorXd v(dim);
  for (int i = 0; i < dim; ++i) {
    v(i) = rng.normal();
  }
  const double n = v.norm();
  const double r = radius * std::pow(rng.uniform(), 1.0 / dim);
  return n > 0.0 ? VectorXd(v * (r / n)) : VectorXd::Zero(dim);
}

double difference_quotient(const CoefficientField &field, const VectorXd &x,
                           const VectorXd &y) {
  const double dist = (x - y).norm();
  if (!(dist > 0.0)) {
    return 0.0;
  }
  const double da = (field.alpha(x) - field.alpha(y)).norm();
  const double db = symmetric_norm(field.sqrt_beta(x) - field.sqrt_beta(y));
  return std::hypot(da, db) / dist;
}

} // namespace

CoefficientReport check_coefficients(const CoefficientField &field,
                                     std::size_t n_samples, double radius,
                                     std::uint64_t seed) {
  if (n_samples < 2) {
    throw std::invalid_argument("check_coefficients needs at least 2 samples");
  }
  if (!(radius > 0.0)) {
    throw std::invalid_argument("check_coefficients needs a positive radius");
  }
  const int m = field.tangent_dim();
  PathRng rng(seed);
  CoefficientReport report;
  report.n_samples = n_samples;
  report.radius = radius;
  report.declared_bound = field.bound_K();
  report.declared_lipschitz = field.lipschitz_L();

  const double local_step = 1e-3 * radius;
  VectorXd previous;
  for (std::size_t i = 0; i < n_samples; ++i) {
    VectorXd x = uniform_in_ball(rng, m, radius);
    const double bound =
        field.alpha(x).norm() + symmetric_norm(field.sqrt_beta(x));
    report.max_bound = std::max(report.max_bound, bound);

    // Far pairs (consecutive samples) and near pairs (a short random step).
    if (i > 0) {
      report.max_lipschitz_ratio = std::max(
          report.max_lipschitz_ratio, difference_quotient(field, x, previous));
    }
    VectorXd dir = uniform_in_ball(rng, m, 1.0);
    if (dir.norm() > 0.0) {
      const VectorXd y = x + dir.normalized() * local_step;
      report.max_lipschitz_ratio = std::max(report.max_lipschitz_ratio,
                                            difference_quotient(field, x, y));
    }
    previous = std::move(x);
  }

  report.bound_ok =
      report.max_bound <= field.bound_K() * (1.0 + kCheckSlack) + 1e-12;
  report.lipschitz_ok = report.max_lipschitz_ratio <=
                        field.lipschitz_L() * (1.0 + kCheckSlack) + 1e-12;
  return report;
}

} // namespace skewdiff
