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
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "skewdiff/geometry.hpp"
#include "skewdiff/skew_bm.hpp"

namespace skewdiff {

/// Everything that defines one diffusion: frame, coefficients, skewness,
/// starting point and time grid.
struct ProcessConfig {
  HyperplaneFrame frame = HyperplaneFrame::axis(2);
  CoefficientField field = CoefficientField::zero(1);
  SkewParams skew;
  VectorXd xS0 = VectorXd::Zero(1);
  double T = 1.0;
  std::int64_t n_steps = 1000;

  /// Splits an ambient starting point into (x1_0, xS0).
  static ProcessConfig from_point(HyperplaneFrame frame, CoefficientField field,
                                  double q, const VectorXd &x0, double T,
                                  std::int64_t n_steps);

  /// Shape and range checks plus `check_coefficients` on the field.
  /// Throws std::invalid_argument on failure.
  void validate() const;
};

/*
 * A simulated path of the full process on grid indices
 * first_index .. first_index + size() - 1.
 *
 * The normal component x1 together with eta is a skew-walk path; xS is kept
 * in tangent coordinates, row-major with stride tangent_dim. The retained
 * noise of step k (grid k -> k+1, relative to first_index) is the lattice
 * move steps[k], the time-changed draws xi[k*m .. k*m+m) and the tangential
 * Wiener increments dwS[k*m .. k*m+m).
 */
struct DiffusionPath {
  HyperplaneFrame frame = HyperplaneFrame::axis(2);
  double q = 0.0;
  double dt = 0.0;
  double h = 0.0;
  double x1_0 = 0.0;
  double snap_offset = 0.0;
  std::int64_t first_index = 0;
  int tangent_dim = 1;
  std::uint64_t seed = 0;

  std::vector<double> x1;
  std::vector<double> eta;
  std::vector<double> xS;

  std::vector<std::int8_t> steps;
  std::vector<double> xi;
  std::vector<double> dwS;

  std::size_t size() const { return x1.size(); }
  bool has_noise() const {
    const auto n = size() == 0 ? 0 : size() - 1;
    const auto m = static_cast<std::size_t>(tangent_dim);
    return steps.size() == n && xi.size() == n * m && dwS.size() == n * m;
  }
  double time(std::size_t k) const {
    return static_cast<double>(first_index + static_cast<std::int64_t>(k)) * dt;
  }
  VectorXd xS_at(std::size_t k) const;
  VectorXd x_at(std::size_t k) const;
};

/*
 * Strong scheme for the equation. Per step k:
 *   x1/eta: one skew-walk move; d_eta = h when the walk sits at 0, else 0;
 *   xS[k+1] = xS[k] + alpha(xS[k]) d_eta + beta^{1/2}(xS[k]) xi_k sqrt(d_eta)
 *             + dwS_k,
 * with xi_k standard normal (drawn only when d_eta > 0) and dwS_k ~ N(0, dt I).
 * The coefficients are checked once at construction.
 */
class Solver {
public:
  explicit Solver(ProcessConfig config);

  const ProcessConfig &config() const { return config_; }
  const SkewWalk &walk() const { return walk_; }

  DiffusionPath solve(std::uint64_t seed) const;

  /// The same equation started from (x1_0, xS0). The coefficient check is
  /// not repeated; it does not depend on the starting point.
  Solver restarted_at(double x1_0, const VectorXd &xS0) const;

  /// Re-runs the recursion from grid index s_index using the retained noise
  /// of `path`. The result coincides bit for bit with the original on
  /// [s_index, n].
  DiffusionPath restart(const DiffusionPath &path, std::int64_t s_index) const;

private:
  struct Unchecked {};
  Solver(ProcessConfig config, Unchecked);

  ProcessConfig config_;
  SkewWalk walk_;
};

DiffusionPath solve(const ProcessConfig &config, std::uint64_t seed);

/// Free-function form; the frame must match the one the path was built with.
DiffusionPath restart(const DiffusionPath &path, std::int64_t s_index,
                      const CoefficientField &field,
                      const HyperplaneFrame &frame);

// ---------------------------------------------------------------------------
// Ensembles

struct EnsembleOptions {
  std::vector<std::int64_t> observe; ///< grid indices to record, in [0, n]
  unsigned workers = 1;
  bool retain_paths = false; ///< keep full DiffusionPaths (memory heavy)
};

/// Moments of one scalar observable across paths.
struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  double std_error = 0.0;
};

Moments moments(std::span<const double> values);

struct ObservationSummary {
  std::int64_t index = 0;
  double t = 0.0;
  Moments x1;
  Moments eta;
  std::vector<Moments> xS;
  double fraction_positive = 0.0; ///< P(x1 > 0), ties at 0 count one half
  double fraction_visited = 0.0;  ///< P(eta > 0)
};

/*
 * States of n_paths independent paths at the observed grid indices. Path p
 * uses the seed stream_seed(master_seed, p), so every entry is identical to
 * the corresponding state of solve(config, stream_seed(master_seed, p)).
 *
 * The per-path, per-observation record is
 *   [x1, eta, w1, xS(0..m), wS(0..m), zeta(0..m)]
 * with w1 = x1 - x1_0 - q eta.
 */
class EnsembleResult {
public:
  EnsembleResult(std::size_t n_paths, std::vector<std::int64_t> observe,
                 int tangent_dim, double dt);

  std::size_t n_paths() const { return n_paths_; }
  std::size_t n_observations() const { return observe_.size(); }
  const std::vector<std::int64_t> &observe() const { return observe_; }
  int tangent_dim() const { return m_; }
  double dt() const { return dt_; }

  double x1(std::size_t p, std::size_t o) const { return record(p, o)[0]; }
  double eta(std::size_t p, std::size_t o) const { return record(p, o)[1]; }
  double w1(std::size_t p, std::size_t o) const { return record(p, o)[2]; }
  double xS(std::size_t p, std::size_t o, int i) const {
    return record(p, o)[3 + i];
  }
  double wS(std::size_t p, std::size_t o, int i) const {
    return record(p, o)[3 + m_ + i];
  }
  double zeta(std::size_t p, std::size_t o, int i) const {
    return record(p, o)[3 + 2 * m_ + i];
  }

  std::span<double> record(std::size_t p, std::size_t o) {
    return {data_.data() + (p * observe_.size() + o) * stride_, stride_};
  }
  std::span<const double> record(std::size_t p, std::size_t o) const {
    return {data_.data() + (p * observe_.size() + o) * stride_, stride_};
  }

  /// Column of one record slot across all paths.
  std::vector<double> column(std::size_t o, std::size_t slot) const;

  std::vector<ObservationSummary> summarize() const;

  std::vector<DiffusionPath> paths;

private:
  std::size_t n_paths_;
  std::vector<std::int64_t> observe_;
  int m_;
  double dt_;
  std::size_t stride_;
  std::vector<double> data_;
};

EnsembleResult ensemble(const ProcessConfig &config, std::size_t n_paths,
                        std::uint64_t master_seed,
                        const EnsembleOptions &options);

EnsembleResult ensemble(const Solver &solver, std::size_t n_paths,
                        std::uint64_t master_seed,
                        const EnsembleOptions &options);

/// x1 and eta of skew-walk (or excursion-scheme) paths at observed indices,
/// without the tangential components. Row-major [path][observation].
struct SkewSamples {
  std::size_t n_paths = 0;
  std::vector<std::int64_t> observe;
  double dt = 0.0;
  double h = 0.0;
  std::vector<double> x1;
  std::vector<double> eta;

  std::vector<double> x1_column(std::size_t o) const;
  std::vector<double> eta_column(std::size_t o) const;
};

enum class SkewScheme { walk, excursion };

SkewSamples skew_ensemble(const SkewParams &params, double T,
                          std::int64_t n_steps, std::size_t n_paths,
                          std::uint64_t master_seed,
                          std::span<const std::int64_t> observe,
                          unsigned workers = 1,
                          SkewScheme scheme = SkewScheme::walk);

// ---------------------------------------------------------------------------
// Path dumps

/// Long format: path_id,t,x1,xS_1..xS_m,eta; one row per grid point.
void write_paths_csv(std::ostream &out, std::span<const DiffusionPath> paths,
                     std::span<const std::int64_t> path_ids);

/// Single path: t,x1,xS_1..xS_m,eta.
void write_path_csv(std::ostream &out, const DiffusionPath &path);

} // namespace skewdiff
