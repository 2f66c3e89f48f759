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

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "skewdiff/sde.hpp"

namespace skewdiff {

using Json = nlohmann::ordered_json;

/// Library version, including `git describe` output when available.
std::string version_string();

/*
 * Outcome of one named statistical check. `statistic` is compared with
 * `threshold`: strictly below passes, except for exact checks
 * (strict = false) where equality passes too. NaN never passes.
 */
struct TestReport {
  std::string name;
  Json params = Json::object();
  double statistic = 0.0;
  double threshold = 0.0;
  bool strict = true;
  bool pass = false;
  Json statistics = Json::object(); ///< component statistics by name
  std::size_t n_paths = 0;
  std::int64_t n_steps = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> notes;

  /// Sets `pass` from statistic and threshold.
  void decide();
  Json to_json() const;
};

// ---------------------------------------------------------------------------
// Goodness of fit

/// sup |F_n - F| over the sorted sample, both one-sided limits of the
/// empirical CDF. Throws std::invalid_argument on an empty sample.
double ks_distance(std::vector<double> samples,
                   const std::function<double(double)> &cdf);

/// Empirical CDF at a with ties at a counted one half; `sorted` must be
/// sorted ascending.
double mid_tie_ecdf(std::span<const double> sorted, double a);

/// Fraction of values above 0 with values equal to 0 counted one half.
double mid_tie_fraction_positive(std::span<const double> values);

/// Integral of P_t(y, (-inf, a]) against P_s(x0, dy), by adaptive
/// Gauss-Kronrod quadrature over y with tails cut at 8 standard deviations.
double ck_composition(double q, double s, double t, double x0, double a);

struct CkOptions {
  double q = 0.0;
  double s = 0.5;
  double t = 0.5;
  double x0 = 0.0;
  std::vector<double> probes = {-1.0, -0.5, 0.0, 0.5, 1.0};
  std::size_t n_paths = 100000;
  std::int64_t n_steps = 10000; ///< over the whole horizon s + t
  std::uint64_t seed = 1;
  double threshold = 0.01;
  unsigned workers = 1;
};

/// Empirical CDF of x1(s + t) at the probes against the composed kernel.
TestReport ck_test(const CkOptions &options);

/// The same comparison on given samples of x1(s + t) started from x0
/// (already on the lattice).
TestReport ck_from_samples(std::vector<double> x1, double q, double s, double t,
                           double x0, std::span<const double> probes,
                           double threshold);

// ---------------------------------------------------------------------------
// Markov property

/*
 * Data for a conditional-independence check. Row i is one path:
 * present(i, 0) is the bucketing coordinate at time s, further columns are
 * other state coordinates at s, `past` is a coordinate at an earlier time
 * and `response` is f(x(t)).
 */
struct MarkovData {
  Eigen::MatrixXd present;
  std::vector<double> past;
  std::vector<double> response;
};

struct MarkovOptions {
  int n_buckets = 10;
  int n_sub = 4;
  std::size_t min_bucket = 100;
  double threshold = 4.0;
};

/*
 * Buckets rows by quantiles of present(:, 0). Inside each bucket the
 * response is regressed on [1, x, x^2, max(x, 0), other columns with their
 * squares and cubes]; the residuals are then split by quantiles of `past` and the
 * statistic is the largest |z| of a pairwise difference of sub-bucket mean
 * residuals. Buckets or sub-buckets below min_bucket rows are skipped and
 * listed in the notes.
 */
TestReport markov_regression(const MarkovData &data, const MarkovOptions &options);

/// Bounded functionals f(x(t)) for the Markov check.
enum class Functional {
  positive,   ///< 1{x1 > 0}
  normal,     ///< tanh(x1)
  tangential, ///< tanh(xS_1)
};

Functional functional_from_string(const std::string &name);
std::string to_string(Functional f);

/// Markov check on the process defined by `config` (horizon t = config.T):
/// present = (x1, xS) at s, past = the functional's coordinate at s / 2.
TestReport markov_regression_test(const ProcessConfig &config, double s,
                                  Functional f, std::size_t n_paths,
                                  std::uint64_t seed, unsigned workers = 1,
                                  const MarkovOptions &options = {});

/// Markov check on an ensemble; `positions` index res.observe() for the
/// times s/2, s and t.
TestReport markov_from_ensemble(const EnsembleResult &res,
                                const std::array<std::size_t, 3> &positions,
                                Functional f, const MarkovOptions &options = {});

/// Same check on Y = W + max_{u <= .} W for a Gaussian random walk W, which
/// is not Markov in Y alone. Expected to fail.
TestReport markov_control_test(double T, std::int64_t n_steps, double s,
                               std::size_t n_paths, std::uint64_t seed,
                               const MarkovOptions &options = {});

// ---------------------------------------------------------------------------
// Martingale batteries

/*
 * z-scores of
 *   (zeta_i(t) - zeta_i(s)) xi,  ((zeta_i^2 - eta)(t) - (zeta_i^2 - eta)(s)) xi,
 *   (w_j(t) - w_j(s)) xi,        ((w_j(t) - w_j(s))^2 - (t - s)) xi
 * for every tangent coordinate i, every coordinate j of w = (w1, wS) and
 * every xi in the battery
 *   1, sign(x1(s)), clamp(zeta_1(s), -1, 1), 1{eta_s > median eta_s},
 *   clamp(w1(s), -1, 1).
 * `pairs` are positions into res.observe(). statistic = max |z|.
 */
TestReport martingale_battery(const EnsembleResult &res,
                              std::span<const std::pair<std::size_t, std::size_t>> pairs,
                              double threshold = 4.0);

/// Names of the battery functionals, in the order used by the report.
const std::vector<std::string> &battery_names();

// ---------------------------------------------------------------------------
// Short-time limits

/// phi(z) = amplitude * (1 - |z - center|^2 / radius^2)_+^power.
struct BumpFunction {
  VectorXd center;
  double radius = 1.0;
  int power = 3;
  double amplitude = 1.0;

  /// Bump whose integral over R^d is one.
  static BumpFunction unit_mass(VectorXd center, double radius, int power);

  double operator()(const VectorXd &z) const;
  /// Integral over R^d, closed form.
  double integral() const;
  /// Integral over the hyperplane (surface measure), closed form.
  double surface_integral(const HyperplaneFrame &frame) const;
};

struct LimitTargets {
  double drift = 0.0;
  double second = 0.0;
  double second_bulk = 0.0;
  double second_surface = 0.0;
  double fourth = 0.0;
};

/// Right-hand sides by quadrature over the hyperplane:
///   drift  = int_S phi (q nu + alpha, theta) dsigma,
///   second = |theta|^2 int phi dz + int_S (beta theta_S, theta_S) phi dsigma,
///   fourth = 0.
LimitTargets limit_targets(const HyperplaneFrame &frame,
                           const CoefficientField &field, double q,
                           const BumpFunction &phi, const VectorXd &theta);

struct LimitOptions {
  std::vector<double> t_list = {0.02, 0.01, 0.005, 0.0025};
  std::int64_t n_steps = 32;       ///< steps per path over [0, t]
  double tangent_spacing = 0.05;   ///< grid spacing of start points along S
  std::size_t paths_per_t = 20000000;
  double tolerance = 0.1;
  std::uint64_t seed = 1;
  unsigned workers = 1;
};

struct LimitEstimate {
  double t = 0.0;
  double drift = 0.0;
  double second = 0.0;
  double fourth = 0.0;
  double drift_se = 0.0;
  double second_se = 0.0;
  double fourth_se = 0.0;
  std::size_t n_paths = 0;
  std::size_t n_nodes = 0;
};

struct LimitResult {
  std::vector<LimitEstimate> rows;
  LimitEstimate extrapolated; ///< intercepts of a + b sqrt(t), t = 0
  LimitTargets targets;
  TestReport report;
};

/*
 * (1/t) int phi(z) E (x(t, z) - z, theta)^k dz for k = 1, 2, 4 at one t.
 * Start points: normal coordinate on the walk lattice m h, tangential
 * coordinates on a cell-centred grid; paths are allocated in proportion to
 * phi at the node.
 */
LimitEstimate estimate_limits_at(const HyperplaneFrame &frame,
                                 const CoefficientField &field, double q,
                                 const BumpFunction &phi, const VectorXd &theta,
                                 double t, const LimitOptions &options,
                                 std::uint64_t seed);

/// Estimates over t_list, weighted least-squares fit a + b sqrt(t) and
/// comparison of the intercepts with `limit_targets`.
LimitResult short_time_limits(const HyperplaneFrame &frame,
                              const CoefficientField &field, double q,
                              const BumpFunction &phi, const VectorXd &theta,
                              const LimitOptions &options);

/// Columns: kind,t,drift_estimate,second_moment_estimate,
/// fourth_moment_estimate,drift_se,second_moment_se,fourth_moment_se,n_paths.
/// kind is estimate, extrapolated or target.
void write_limits_csv(std::ostream &out, const LimitResult &result);

// ---------------------------------------------------------------------------
// Small helpers shared with the CLI

/// Restart identity on n_paths random (path, s) pairs; statistic is the
/// largest absolute difference, which must be exactly zero.
TestReport restart_check(const ProcessConfig &config, std::size_t n_paths,
                         std::uint64_t seed);

/// Weighted least squares y = a + b x. Returns (a, b, se(a)); se uses the
/// given standard errors (equal weights when any is zero).
struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double intercept_se = 0.0;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y,
                 std::span<const double> se);

} // namespace skewdiff
