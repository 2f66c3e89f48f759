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

#include "skewdiff/sde.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "skewdiff/parallel.hpp"
#include "skewdiff/timechange.hpp"

namespace skewdiff {

namespace {

constexpr std::size_t kCoefficientSamples = 2000;
constexpr std::uint64_t kCoefficientSeed = 0x5eedc0ef;

std::span<double> span_of(VectorXd &v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Mutable state of one path while stepping.
struct StepState {
  std::int64_t site = 0;
  double eta = 0.0;
  VectorXd xS;
  VectorXd wS;
  VectorXd zeta;
  // Noise of the step being taken.
  VectorXd xi;
  VectorXd zeta_increment;
  VectorXd dw;
  VectorXd work;

  StepState(std::int64_t start_site, const VectorXd &xS0)
      : site(start_site), xS(xS0), wS(VectorXd::Zero(xS0.size())),
        zeta(VectorXd::Zero(xS0.size())), xi(xS0.size()),
        zeta_increment(xS0.size()), dw(xS0.size()), work(xS0.size()) {}
};

/// Applies one step whose noise (move, xi, dw) is already in `s`. Used by
/// fresh simulation and by replay alike; h is the lattice spacing.
void apply_step(const CoefficientField &field, double h, StepState &s,
                int move) {
  const bool at_zero = s.site == 0;
  const double d_eta = at_zero ? h : 0.0;
  if (at_zero) {
    s.eta += h;
  }
  s.site += move;
  scale_time_changed_draws(d_eta, span_of(s.xi), span_of(s.zeta_increment));
  if (at_zero) {
    field.surface_increment(s.xS, d_eta, s.zeta_increment, s.work);
    s.xS += s.work;
    s.zeta += s.zeta_increment;
  }
  s.xS += s.dw;
  s.wS += s.dw;
}

/// Draws the noise of the next step into `s` and returns the lattice move.
int draw_step(const SkewWalk &walk, double sqrt_dt, StepState &s,
              PathRng &rng) {
  const int move = walk.draw(s.site, rng);
  if (s.site == 0) {
    for (Eigen::Index i = 0; i < s.xi.size(); ++i) {
      s.xi(i) = rng.normal();
    }
  } else {
    s.xi.setZero();
  }
  for (Eigen::Index i = 0; i < s.dw.size(); ++i) {
    s.dw(i) = sqrt_dt * rng.normal();
  }
  return move;
}

void record_point(DiffusionPath &path, const StepState &s, std::size_t k) {
  path.x1[k] = static_cast<double>(s.site) * path.h;
  path.eta[k] = s.eta;
  const auto m = static_cast<std::size_t>(path.tangent_dim);
  std::copy(s.xS.data(), s.xS.data() + m, path.xS.begin() + k * m);
}

} // namespace

// ---------------------------------------------------------------------------
// ProcessConfig

ProcessConfig ProcessConfig::from_point(HyperplaneFrame frame,
                                        CoefficientField field, double q,
                                        const VectorXd &x0, double T,
                                        std::int64_t n_steps) {
  const Decomposition parts = project(frame, x0);
  ProcessConfig config{std::move(frame), std::move(field),
                       SkewParams{q, parts.x1}, parts.xS, T, n_steps};
  return config;
}

void ProcessConfig::validate() const {
  skew.validate();
  if (!(T > 0.0) || !std::isfinite(T)) {
    throw std::invalid_argument("horizon T must be positive and finite");
  }
  if (n_steps < 1) {
    throw std::invalid_argument("n_steps must be at least 1");
  }
  if (field.tangent_dim() != frame.tangent_dim()) {
    throw std::invalid_argument(
        "coefficient field lives in dimension " +
        std::to_string(field.tangent_dim()) + " but the hyperplane has " +
        std::to_string(frame.tangent_dim()));
  }
  if (xS0.size() != frame.tangent_dim()) {
    throw std::invalid_argument("tangential starting point has wrong length");
  }
  if (!field.is_zero()) {
    const double radius = xS0.norm() + 5.0 * std::sqrt(T) + 1.0;
    const CoefficientReport report =
        check_coefficients(field, kCoefficientSamples, radius, kCoefficientSeed);
    if (!report.pass()) {
      throw std::invalid_argument(
          "coefficient field violates its declared constants: sampled bound " +
          std::to_string(report.max_bound) + " vs K = " +
          std::to_string(report.declared_bound) + ", sampled Lipschitz ratio " +
          std::to_string(report.max_lipschitz_ratio) + " vs L = " +
          std::to_string(report.declared_lipschitz));
    }
  }
}

// ---------------------------------------------------------------------------
// DiffusionPath

VectorXd DiffusionPath::xS_at(std::size_t k) const {
  return Eigen::Map<const VectorXd>(xS.data() + k * tangent_dim, tangent_dim);
}

VectorXd DiffusionPath::x_at(std::size_t k) const {
  return embed(frame, x1[k], xS_at(k));
}

// ---------------------------------------------------------------------------
// Solver

Solver::Solver(ProcessConfig config)
    : config_(std::move(config)),
      walk_(config_.skew, config_.T, config_.n_steps) {
  config_.validate();
}

Solver::Solver(ProcessConfig config, Unchecked)
    : config_(std::move(config)),
      walk_(config_.skew, config_.T, config_.n_steps) {}

Solver Solver::restarted_at(double x1_0, const VectorXd &xS0) const {
  if (xS0.size() != config_.frame.tangent_dim()) {
    throw std::invalid_argument("tangential starting point has wrong length");
  }
  ProcessConfig moved = config_;
  moved.skew.x1_0 = x1_0;
  moved.skew.validate();
  moved.xS0 = xS0;
  return Solver(std::move(moved), Unchecked{});
}

DiffusionPath Solver::solve(std::uint64_t seed) const {
  const auto n = static_cast<std::size_t>(config_.n_steps);
  const int m = config_.frame.tangent_dim();
  const auto mu = static_cast<std::size_t>(m);
  const double sqrt_dt = std::sqrt(walk_.dt());

  DiffusionPath path;
  path.frame = config_.frame;
  path.q = config_.skew.q;
  path.dt = walk_.dt();
  path.h = walk_.h();
  path.x1_0 = walk_.start();
  path.snap_offset = walk_.snap_offset();
  path.tangent_dim = m;
  path.seed = seed;
  path.x1.resize(n + 1);
  path.eta.resize(n + 1);
  path.xS.resize((n + 1) * mu);
  path.steps.resize(n);
  path.xi.resize(n * mu);
  path.dwS.resize(n * mu);

  PathRng rng(seed);
  StepState state(walk_.start_site(), config_.xS0);
  record_point(path, state, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const int move = draw_step(walk_, sqrt_dt, state, rng);
    path.steps[k] = static_cast<std::int8_t>(move);
    std::copy(state.xi.data(), state.xi.data() + m, path.xi.begin() + k * mu);
    std::copy(state.dw.data(), state.dw.data() + m, path.dwS.begin() + k * mu);
    apply_step(config_.field, walk_.h(), state, move);
    record_point(path, state, k + 1);
  }
  return path;
}

DiffusionPath Solver::restart(const DiffusionPath &path,
                              std::int64_t s_index) const {
  return skewdiff::restart(path, s_index, config_.field, config_.frame);
}

DiffusionPath solve(const ProcessConfig &config, std::uint64_t seed) {
  return Solver(config).solve(seed);
}

DiffusionPath restart(const DiffusionPath &path, std::int64_t s_index,
                      const CoefficientField &field,
                      const HyperplaneFrame &frame) {
  if (!path.has_noise()) {
    throw std::invalid_argument("restart: path does not carry retained noise");
  }
  if (path.first_index != 0) {
    throw std::invalid_argument("restart: expected a path that starts at 0");
  }
  const auto n = static_cast<std::int64_t>(path.size()) - 1;
  if (s_index < 0 || s_index > n) {
    throw std::invalid_argument("restart: s_index out of range");
  }
  if (frame.dim() != path.frame.dim() ||
      frame.normal() != path.frame.normal() ||
      field.tangent_dim() != path.tangent_dim) {
    throw std::invalid_argument("restart: frame or field does not match path");
  }
  const int m = path.tangent_dim;
  const auto mu = static_cast<std::size_t>(m);
  const auto s = static_cast<std::size_t>(s_index);
  const auto len = static_cast<std::size_t>(n - s_index);

  DiffusionPath out;
  out.frame = path.frame;
  out.q = path.q;
  out.dt = path.dt;
  out.h = path.h;
  out.x1_0 = path.x1_0;
  out.snap_offset = path.snap_offset;
  out.first_index = s_index;
  out.tangent_dim = m;
  out.seed = path.seed;
  out.x1.resize(len + 1);
  out.eta.resize(len + 1);
  out.xS.resize((len + 1) * mu);
  out.steps.assign(path.steps.begin() + s_index, path.steps.end());
  out.xi.assign(path.xi.begin() + static_cast<std::ptrdiff_t>(s * mu),
                path.xi.end());
  out.dwS.assign(path.dwS.begin() + static_cast<std::ptrdiff_t>(s * mu),
                 path.dwS.end());

  // Restart from the state x(s): lattice site, local time and tangential
  // position. Everything after that is driven by the retained noise.
  StepState state(std::llround(path.x1[s] / path.h), path.xS_at(s));
  state.eta = path.eta[s];
  record_point(out, state, 0);
  for (std::size_t k = 0; k < len; ++k) {
    for (std::size_t i = 0; i < mu; ++i) {
      state.xi(static_cast<Eigen::Index>(i)) = out.xi[k * mu + i];
      state.dw(static_cast<Eigen::Index>(i)) = out.dwS[k * mu + i];
    }
    apply_step(field, path.h, state, out.steps[k]);
    record_point(out, state, k + 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ensembles

Moments moments(std::span<const double> values) {
  Moments out;
  const auto n = values.size();
  if (n == 0) {
    return out;
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  out.mean = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double v : values) {
      ss += (v - out.mean) * (v - out.mean);
    }
    out.variance = ss / static_cast<double>(n - 1);
    out.std_error = std::sqrt(out.variance / static_cast<double>(n));
  }
  return out;
}

EnsembleResult::EnsembleResult(std::size_t n_paths,
                               std::vector<std::int64_t> observe,
                               int tangent_dim, double dt)
    : n_paths_(n_paths), observe_(std::move(observe)), m_(tangent_dim),
      dt_(dt), stride_(3 + 3 * static_cast<std::size_t>(tangent_dim)),
      data_(n_paths_ * observe_.size() * stride_, 0.0) {}

std::vector<double> EnsembleResult::column(std::size_t o,
                                           std::size_t slot) const {
  std::vector<double> out(n_paths_);
  for (std::size_t p = 0; p < n_paths_; ++p) {
    out[p] = record(p, o)[slot];
  }
  return out;
}

std::vector<ObservationSummary> EnsembleResult::summarize() const {
  std::vector<ObservationSummary> out;
  out.reserve(observe_.size());
  for (std::size_t o = 0; o < observe_.size(); ++o) {
    ObservationSummary s;
    s.index = observe_[o];
    s.t = static_cast<double>(observe_[o]) * dt_;
    const auto x1 = column(o, 0);
    const auto eta = column(o, 1);
    s.x1 = moments(x1);
    s.eta = moments(eta);
    for (int i = 0; i < m_; ++i) {
      s.xS.push_back(moments(column(o, 3 + static_cast<std::size_t>(i))));
    }
    double positive = 0.0;
    double visited = 0.0;
    for (std::size_t p = 0; p < n_paths_; ++p) {
      positive += x1[p] > 0.0 ? 1.0 : (x1[p] == 0.0 ? 0.5 : 0.0);
      visited += eta[p] > 0.0 ? 1.0 : 0.0;
    }
    s.fraction_positive = n_paths_ ? positive / static_cast<double>(n_paths_) : 0.0;
    s.fraction_visited = n_paths_ ? visited / static_cast<double>(n_paths_) : 0.0;
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::vector<std::int64_t> checked_observe(std::span<const std::int64_t> observe,
                                          std::int64_t n_steps) {
  for (auto k : observe) {
    if (k < 0 || k > n_steps) {
      throw std::invalid_argument("observation index " + std::to_string(k) +
                                  " outside [0, " + std::to_string(n_steps) +
                                  "]");
    }
  }
  return {observe.begin(), observe.end()};
}

} // namespace

EnsembleResult ensemble(const ProcessConfig &config, std::size_t n_paths,
                        std::uint64_t master_seed,
                        const EnsembleOptions &options) {
  return ensemble(Solver(config), n_paths, master_seed, options);
}

EnsembleResult ensemble(const Solver &solver, std::size_t n_paths,
                        std::uint64_t master_seed,
                        const EnsembleOptions &options) {
  if (n_paths < 1) {
    throw std::invalid_argument("ensemble needs at least one path");
  }
  const ProcessConfig &config = solver.config();
  const SkewWalk &walk = solver.walk();
  const int m = config.frame.tangent_dim();
  auto observe = checked_observe(options.observe, config.n_steps);

  EnsembleResult result(n_paths, observe, m, walk.dt());
  if (options.retain_paths) {
    result.paths.resize(n_paths);
  }

  // Observation slots sorted by grid index, so one pass records them all.
  std::vector<std::size_t> order(observe.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return observe[a] < observe[b];
  });

  const double sqrt_dt = std::sqrt(walk.dt());
  const double x1_0 = walk.start();
  const double q = config.skew.q;

  auto write = [&](std::size_t p, std::size_t o, const StepState &s) {
    auto rec = result.record(p, o);
    const double x1 = walk.position(s.site);
    rec[0] = x1;
    rec[1] = s.eta;
    rec[2] = x1 - x1_0 - q * s.eta;
    for (int i = 0; i < m; ++i) {
      rec[3 + i] = s.xS(i);
      rec[3 + m + i] = s.wS(i);
      rec[3 + 2 * m + i] = s.zeta(i);
    }
  };

  parallel_for(n_paths, options.workers, [&](std::size_t p) {
    const std::uint64_t seed = stream_seed(master_seed, p);
    if (options.retain_paths) {
      result.paths[p] = solver.solve(seed);
    }
    PathRng rng(seed);
    StepState state(walk.start_site(), config.xS0);
    std::size_t next = 0;
    auto flush = [&](std::int64_t k) {
      while (next < order.size() && observe[order[next]] == k) {
        write(p, order[next], state);
        ++next;
      }
    };
    flush(0);
    for (std::int64_t k = 0; k < config.n_steps && next < order.size(); ++k) {
      const int move = draw_step(walk, sqrt_dt, state, rng);
      apply_step(config.field, walk.h(), state, move);
      flush(k + 1);
    }
  });
  return result;
}

std::vector<double> SkewSamples::x1_column(std::size_t o) const {
  std::vector<double> out(n_paths);
  for (std::size_t p = 0; p < n_paths; ++p) {
    out[p] = x1[p * observe.size() + o];
  }
  return out;
}

std::vector<double> SkewSamples::eta_column(std::size_t o) const {
  std::vector<double> out(n_paths);
  for (std::size_t p = 0; p < n_paths; ++p) {
    out[p] = eta[p * observe.size() + o];
  }
  return out;
}

SkewSamples skew_ensemble(const SkewParams &params, double T,
                          std::int64_t n_steps, std::size_t n_paths,
                          std::uint64_t master_seed,
                          std::span<const std::int64_t> observe,
                          unsigned workers, SkewScheme scheme) {
  if (n_paths < 1) {
    throw std::invalid_argument("ensemble needs at least one path");
  }
  const SkewWalk walk(params, T, n_steps);
  SkewSamples out;
  out.n_paths = n_paths;
  out.observe = checked_observe(observe, n_steps);
  out.dt = walk.dt();
  out.h = walk.h();
  const std::size_t n_obs = out.observe.size();
  out.x1.assign(n_paths * n_obs, 0.0);
  out.eta.assign(n_paths * n_obs, 0.0);

  std::vector<std::size_t> order(n_obs);
  for (std::size_t i = 0; i < n_obs; ++i) {
    order[i] = i;
  }
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return out.observe[a] < out.observe[b];
  });

  parallel_for(n_paths, workers, [&](std::size_t p) {
    PathRng rng(stream_seed(master_seed, p));
    double *x1 = out.x1.data() + p * n_obs;
    double *eta_out = out.eta.data() + p * n_obs;
    if (scheme == SkewScheme::excursion) {
      const SkewPath path = simulate_skew_excursion(params, T, n_steps, rng);
      for (std::size_t o = 0; o < n_obs; ++o) {
        const auto k = static_cast<std::size_t>(out.observe[o]);
        x1[o] = path.x1[k];
        eta_out[o] = path.eta[k];
      }
      return;
    }
    std::int64_t site = walk.start_site();
    double eta = 0.0;
    std::size_t next = 0;
    auto flush = [&](std::int64_t k) {
      while (next < n_obs && out.observe[order[next]] == k) {
        x1[order[next]] = walk.position(site);
        eta_out[order[next]] = eta;
        ++next;
      }
    };
    flush(0);
    for (std::int64_t k = 0; k < n_steps && next < n_obs; ++k) {
      const int move = walk.draw(site, rng);
      if (site == 0) {
        eta += walk.h();
      }
      site += move;
      flush(k + 1);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Dumps

namespace {

void write_row(std::ostream &out, const DiffusionPath &path, std::size_t k) {
  out << path.time(k) << ',' << path.x1[k];
  const auto m = static_cast<std::size_t>(path.tangent_dim);
  for (std::size_t i = 0; i < m; ++i) {
    out << ',' << path.xS[k * m + i];
  }
  out << ',' << path.eta[k] << '\n';
}

void write_header(std::ostream &out, int m, bool with_id) {
  if (with_id) {
    out << "path_id,";
  }
  out << "t,x1";
  for (int i = 1; i <= m; ++i) {
    out << ",xS_" << i;
  }
  out << ",eta\n";
}

} // namespace

void write_paths_csv(std::ostream &out, std::span<const DiffusionPath> paths,
                     std::span<const std::int64_t> path_ids) {
  if (paths.empty()) {
    return;
  }
  if (path_ids.size() != paths.size()) {
    throw std::invalid_argument("write_paths_csv: one id per path required");
  }
  write_header(out, paths.front().tangent_dim, true);
  for (std::size_t p = 0; p < paths.size(); ++p) {
    for (std::size_t k = 0; k < paths[p].size(); ++k) {
      out << path_ids[p] << ',';
      write_row(out, paths[p], k);
    }
  }
}

void write_path_csv(std::ostream &out, const DiffusionPath &path) {
  write_header(out, path.tangent_dim, false);
  for (std::size_t k = 0; k < path.size(); ++k) {
    write_row(out, path, k);
  }
}

} // namespace skewdiff
