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
#include <optional>
#include <string>
#include <variant>

#include <Eigen/Dense>

namespace skewdiff {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/*
 * Frame of a hyperplane S = {x : (x, nu) = 0} in R^d.
 *
 * Tangential quantities are always expressed in the coordinates of
 * `tangent_basis()`, a fixed orthonormal basis of S stored column-wise
 * (d x (d-1)). The basis is built by Gram-Schmidt over the standard basis,
 * skipping the axis most aligned with nu, so an axis-aligned normal e_i
 * yields the remaining standard vectors in their natural order.
 */
class HyperplaneFrame {
public:
  /// Frame with nu = e_1.
  static HyperplaneFrame axis(int dim);

  /// `normal` must be nonzero with at least two components; it is
  /// normalized here.
  explicit HyperplaneFrame(const VectorXd &normal);

  int dim() const { return static_cast<int>(normal_.size()); }
  int tangent_dim() const { return dim() - 1; }
  const VectorXd &normal() const { return normal_; }
  const MatrixXd &tangent_basis() const { return basis_; }

private:
  VectorXd normal_;
  MatrixXd basis_;
};

/// Orthogonal decomposition x = x1 * nu + (tangential part).
struct Decomposition {
  double x1 = 0.0;
  VectorXd xS; ///< tangent-basis coordinates, length d-1
};

Decomposition project(const HyperplaneFrame &frame, const VectorXd &x);

VectorXd embed(const HyperplaneFrame &frame, double x1, const VectorXd &xS);

/// Symmetric square root of a symmetric nonnegative matrix. Eigenvalues in
/// [-1e-10, 0) are clamped to zero; larger violations and asymmetry beyond
/// 1e-10 throw std::invalid_argument.
MatrixXd psd_sqrt(const MatrixXd &m);

/// Spectral norm of a symmetric matrix.
double symmetric_norm(const MatrixXd &m);

// ---------------------------------------------------------------------------
// Coefficient families. All vectors and matrices live in tangent
// coordinates of the frame.

/// alpha(x) = a, beta(x) = B.
struct ConstantFamily {
  VectorXd alpha;
  MatrixXd beta;
};

/// alpha(x) = projection of (slope * x + offset) onto the ball of radius
/// `alpha_radius`; beta(x) = B.
struct ClampedLinearFamily {
  MatrixXd slope;
  VectorXd offset;
  double alpha_radius = 1.0;
  MatrixXd beta;
};

/// alpha(x) = psi(x) a, beta^{1/2}(x) = psi(x) B^{1/2}, with the profile
/// psi(x) = (1 - |x - c|^2 / r^2)_+^p.
struct RadialBumpFamily {
  VectorXd center;
  double radius = 1.0;
  int power = 3;
  VectorXd alpha_direction;
  MatrixXd beta;
};

using CoefficientFamily =
    std::variant<ConstantFamily, ClampedLinearFamily, RadialBumpFamily>;

/// Profile of the radial bump family and its largest slope.
double bump_profile(double squared_distance, double radius, int power);
double bump_profile_max_slope(double radius, int power);

/*
 * The pair (alpha, beta) on S with its bound K and Lipschitz constant L.
 *
 * K bounds |alpha| + ||beta^{1/2}|| and L bounds
 * sqrt(|alpha(x) - alpha(y)|^2 + ||beta^{1/2}(x) - beta^{1/2}(y)||^2) / |x - y|
 * (spectral norms). Each family knows its analytic constants; declared
 * constants default to them and may be overridden, e.g. to exercise
 * `check_coefficients`.
 */
class CoefficientField {
public:
  CoefficientField(CoefficientFamily family,
                   std::optional<double> declared_bound = std::nullopt,
                   std::optional<double> declared_lipschitz = std::nullopt);

  /// alpha = 0, beta = 0.
  static CoefficientField zero(int tangent_dim);

  int tangent_dim() const { return tangent_dim_; }
  const CoefficientFamily &family() const { return family_; }
  std::string family_name() const;

  double bound_K() const { return bound_; }
  double lipschitz_L() const { return lipschitz_; }
  double analytic_bound() const { return analytic_bound_; }
  double analytic_lipschitz() const { return analytic_lipschitz_; }

  /// True when alpha and beta vanish identically.
  bool is_zero() const { return is_zero_; }
  /// True for the constant family.
  bool is_constant() const {
    return std::holds_alternative<ConstantFamily>(family_);
  }

  VectorXd alpha(const VectorXd &xS) const;
  MatrixXd beta(const VectorXd &xS) const;
  MatrixXd sqrt_beta(const VectorXd &xS) const;

  /// out = alpha(xS) * d_eta + beta^{1/2}(xS) * zeta_increment, written into
  /// preallocated storage.
  void surface_increment(const VectorXd &xS, double d_eta,
                         const VectorXd &zeta_increment, VectorXd &out) const;

private:
  double profile(const VectorXd &xS) const;

  CoefficientFamily family_;
  int tangent_dim_ = 0;
  MatrixXd sqrt_beta_; // B^{1/2} of the family's matrix
  double analytic_bound_ = 0.0;
  double analytic_lipschitz_ = 0.0;
  double bound_ = 0.0;
  double lipschitz_ = 0.0;
  bool is_zero_ = false;
};

struct CoefficientReport {
  std::size_t n_samples = 0;
  double radius = 0.0;
  double max_bound = 0.0;          ///< max sampled |alpha| + ||beta^{1/2}||
  double max_lipschitz_ratio = 0.0; ///< max sampled difference quotient
  double declared_bound = 0.0;
  double declared_lipschitz = 0.0;
  bool bound_ok = false;
  bool lipschitz_ok = false;
  bool pass() const { return bound_ok && lipschitz_ok; }
};

/// Samples `n_samples` points uniformly in the tangent ball of the given
/// radius and reports the worst bound and difference quotient seen.
CoefficientReport check_coefficients(const CoefficientField &field,
                                     std::size_t n_samples, double radius,
                                     std::uint64_t seed);

} // namespace skewdiff
