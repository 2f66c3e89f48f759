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

#include "skewdiff/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "skewdiff/parallel.hpp"

#ifndef SKEWDIFF_VERSION
#define SKEWDIFF_VERSION "unknown"
#endif

namespace skewdiff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double z_score(double mean, double variance, std::size_t n) {
  const double se = std::sqrt(variance / static_cast<double>(n));
  if (se > 0.0) {
    return mean / se;
  }
  return mean == 0.0 ? 0.0 : kInf;
}

std::vector<std::size_t> argsort(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

/// Splits [0, n) into `parts` contiguous chunks of near-equal size.
std::vector<std::pair<std::size_t, std::size_t>> chunks(std::size_t n, int parts) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto p = static_cast<std::size_t>(parts);
  for (std::size_t i = 0; i < p; ++i) {
    out.emplace_back(i * n / p, (i + 1) * n / p);
  }
  return out;
}

Json vector_json(const VectorXd &v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out.push_back(v(i));
  }
  return out;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

} // namespace

std::string version_string() { return SKEWDIFF_VERSION; }

void TestReport::decide() {
  if (std::isnan(statistic)) {
    pass = false;
  } else {
    pass = strict ? statistic < threshold : statistic <= threshold;
  }
}

Json TestReport::to_json() const {
  Json out;
  out["name"] = name;
  out["version"] = version_string();
  out["seed"] = seed;
  out["n_paths"] = n_paths;
  out["n_steps"] = n_steps;
  out["params"] = params;
  if (std::isfinite(statistic)) {
    out["statistic"] = statistic;
  } else {
    out["statistic"] = std::isnan(statistic) ? "nan" : "inf";
  }
  out["threshold"] = threshold;
  out["comparison"] = strict ? "statistic < threshold" : "statistic <= threshold";
  out["pass"] = pass;
  out["statistics"] = statistics;
  out["notes"] = notes;
  return out;
}

// ---------------------------------------------------------------------------
// Goodness of fit

double ks_distance(std::vector<double> samples,
                   const std::function<double(double)> &cdf) {
  if (samples.empty()) {
    throw std::invalid_argument("ks_distance: empty sample");
  }
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  double f = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    // Lattice samples repeat; evaluate the CDF once per distinct value.
    if (i == 0 || samples[i] != samples[i - 1]) {
      f = cdf(samples[i]);
    }
    d = std::max({d, std::abs(f - static_cast<double>(i) / n),
                  std::abs(static_cast<double>(i + 1) / n - f)});
  }
  return d;
}

double mid_tie_ecdf(std::span<const double> sorted, double a) {
  if (sorted.empty()) {
    throw std::invalid_argument("mid_tie_ecdf: empty sample");
  }
  const auto lo = std::lower_bound(sorted.begin(), sorted.end(), a);
  const auto hi = std::upper_bound(lo, sorted.end(), a);
  const double below = static_cast<double>(lo - sorted.begin());
  const double ties = static_cast<double>(hi - lo);
  return (below + 0.5 * ties) / static_cast<double>(sorted.size());
}

double mid_tie_fraction_positive(std::span<const double> values) {
  if (values.empty()) {
    throw std::invalid_argument("mid_tie_fraction_positive: empty sample");
  }
  double count = 0.0;
  for (double v : values) {
    count += v > 0.0 ? 1.0 : (v == 0.0 ? 0.5 : 0.0);
  }
  return count / static_cast<double>(values.size());
}

double ck_composition(double q, double s, double t, double x0, double a) {
  if (!(s > 0.0) || !(t > 0.0)) {
    throw std::invalid_argument("ck_composition: s and t must be positive");
  }
  using boost::math::quadrature::gauss_kronrod;
  auto integrand = [&](double y) {
    return skew_density(q, s, x0, y) * skew_cdf(q, t, y, a);
  };
  const double reach = std::abs(x0) + 8.0 * std::sqrt(s);
  // Gauss-Kronrod nodes are interior, so the jump at 0 is never sampled.
  return gauss_kronrod<double, 61>::integrate(integrand, -reach, 0.0, 15, 1e-13) +
         gauss_kronrod<double, 61>::integrate(integrand, 0.0, reach, 15, 1e-13);
}

TestReport ck_from_samples(std::vector<double> x, double q, double s, double t,
                           double x0, std::span<const double> probes,
                           double threshold) {
  if (probes.empty()) {
    throw std::invalid_argument("ck_test: probe list is empty");
  }
  if (!(s > 0.0) || !(t > 0.0)) {
    throw std::invalid_argument("ck_test: s and t must be positive");
  }
  std::sort(x.begin(), x.end());
  TestReport r;
  r.name = "ck";
  r.params = {{"q", q},
              {"s", s},
              {"t", t},
              {"x0", x0},
              {"probes", std::vector<double>(probes.begin(), probes.end())}};
  r.n_paths = x.size();
  r.threshold = threshold;

  Json rows = Json::array();
  double worst = 0.0;
  for (double a : probes) {
    const double empirical = mid_tie_ecdf(x, a);
    const double composed = ck_composition(q, s, t, x0, a);
    worst = std::max(worst, std::abs(empirical - composed));
    rows.push_back({{"probe", a}, {"empirical", empirical}, {"composed", composed}});
  }
  r.statistics["probes"] = rows;
  r.statistics["mass_below_zero"] =
      static_cast<double>(std::lower_bound(x.begin(), x.end(), 0.0) - x.begin()) /
      static_cast<double>(x.size());
  r.statistic = worst;
  r.notes.push_back("empirical CDF counts samples equal to a probe as one half");
  r.decide();
  return r;
}

TestReport ck_test(const CkOptions &o) {
  if (o.probes.empty()) {
    throw std::invalid_argument("ck_test: probe list is empty");
  }
  const SkewParams params{o.q, o.x0};
  const SkewWalk walk(params, o.s + o.t, o.n_steps);
  const std::int64_t obs[] = {o.n_steps};
  const auto samples =
      skew_ensemble(params, o.s + o.t, o.n_steps, o.n_paths, o.seed, obs, o.workers);
  TestReport r = ck_from_samples(samples.x1_column(0), o.q, o.s, o.t, walk.start(),
                                 o.probes, o.threshold);
  r.params["x0_requested"] = o.x0;
  r.n_steps = o.n_steps;
  r.seed = o.seed;
  if (walk.snap_offset() != 0.0) {
    r.notes.push_back("starting point snapped to the walk lattice");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Markov property

TestReport markov_regression(const MarkovData &data, const MarkovOptions &o) {
  const auto n = static_cast<std::size_t>(data.present.rows());
  if (data.past.size() != n || data.response.size() != n || data.present.cols() < 1) {
    throw std::invalid_argument("markov_regression: inconsistent data sizes");
  }
  if (o.n_buckets < 1 || o.n_sub < 2) {
    throw std::invalid_argument("markov_regression: need >= 1 bucket and >= 2 sub-buckets");
  }

  TestReport r;
  r.name = "markov";
  r.threshold = o.threshold;
  r.n_paths = n;
  r.params = {{"n_buckets", o.n_buckets},
              {"n_sub", o.n_sub},
              {"min_bucket", o.min_bucket}};

  std::vector<double> key(n);
  for (std::size_t i = 0; i < n; ++i) {
    key[i] = data.present(static_cast<Eigen::Index>(i), 0);
  }
  const auto order = argsort(key);
  const Eigen::Index extra = data.present.cols() - 1;

  double worst = 0.0;
  int used = 0, skipped = 0, skipped_sub = 0;
  std::size_t comparisons = 0;
  Json per_bucket = Json::array();
  for (const auto &[begin, end] : chunks(n, o.n_buckets)) {
    const std::size_t size = end - begin;
    if (size < o.min_bucket) {
      ++skipped;
      r.notes.push_back("bucket with " + std::to_string(size) + " rows skipped");
      continue;
    }
    // Least squares on the present state, centred for conditioning.
    double centre = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      centre += key[order[k]];
    }
    centre /= static_cast<double>(size);
    const Eigen::Index cols = 4 + 3 * extra;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(size), cols);
    Eigen::VectorXd y(static_cast<Eigen::Index>(size));
    for (std::size_t k = begin; k < end; ++k) {
      const auto row = static_cast<Eigen::Index>(k - begin);
      const auto i = static_cast<Eigen::Index>(order[k]);
      const double x = key[order[k]] - centre;
      X(row, 0) = 1.0;
      X(row, 1) = x;
      X(row, 2) = x * x;
      X(row, 3) = std::max(key[order[k]], 0.0);
      for (Eigen::Index c = 0; c < extra; ++c) {
        const double v = data.present(i, c + 1);
        X(row, 4 + 3 * c) = v;
        X(row, 5 + 3 * c) = v * v;
        X(row, 6 + 3 * c) = v * v * v;
      }
      y(row) = data.response[order[k]];
    }
    const Eigen::VectorXd coef = X.completeOrthogonalDecomposition().solve(y);
    const Eigen::VectorXd resid = y - X * coef;

    std::vector<double> past(size);
    for (std::size_t k = begin; k < end; ++k) {
      past[k - begin] = data.past[order[k]];
    }
    const auto sub_order = argsort(past);
    struct Cell {
      double mean, var;
      std::size_t n;
    };
    std::vector<Cell> cells;
    for (const auto &[sb, se] : chunks(size, o.n_sub)) {
      if (se - sb < o.min_bucket) {
        ++skipped_sub;
        continue;
      }
      std::vector<double> vals;
      for (std::size_t k = sb; k < se; ++k) {
        vals.push_back(resid(static_cast<Eigen::Index>(sub_order[k])));
      }
      const Moments m = moments(vals);
      cells.push_back({m.mean, m.variance, vals.size()});
    }
    double bucket_worst = 0.0;
    for (std::size_t a = 0; a < cells.size(); ++a) {
      for (std::size_t b = a + 1; b < cells.size(); ++b) {
        const double denom = std::sqrt(cells[a].var / cells[a].n + cells[b].var / cells[b].n);
        const double diff = cells[a].mean - cells[b].mean;
        const double z = denom > 0.0 ? std::abs(diff) / denom : (diff == 0.0 ? 0.0 : kInf);
        bucket_worst = std::max(bucket_worst, z);
        ++comparisons;
      }
    }
    ++used;
    worst = std::max(worst, bucket_worst);
    per_bucket.push_back({{"rows", size}, {"centre", centre}, {"max_z", bucket_worst}});
  }
  if (skipped_sub > 0) {
    r.notes.push_back(std::to_string(skipped_sub) +
                      " sub-buckets below the minimum size skipped");
  }
  r.statistics["buckets"] = per_bucket;
  r.statistics["buckets_used"] = used;
  r.statistics["buckets_skipped"] = skipped;
  r.statistics["comparisons"] = comparisons;
  if (comparisons == 0) {
    r.statistic = std::numeric_limits<double>::quiet_NaN();
    r.notes.push_back("no bucket had enough rows for a comparison");
  } else {
    r.statistic = worst;
  }
  r.decide();
  return r;
}

Functional functional_from_string(const std::string &name) {
  if (name == "positive") {
    return Functional::positive;
  }
  if (name == "normal") {
    return Functional::normal;
  }
  if (name == "tangential") {
    return Functional::tangential;
  }
  throw std::invalid_argument("unknown functional '" + name +
                              "' (expected positive, normal or tangential)");
}

std::string to_string(Functional f) {
  switch (f) {
  case Functional::positive:
    return "positive";
  case Functional::normal:
    return "normal";
  case Functional::tangential:
    return "tangential";
  }
  return "unknown";
}

TestReport markov_from_ensemble(const EnsembleResult &res,
                                const std::array<std::size_t, 3> &positions,
                                Functional f, const MarkovOptions &options) {
  const auto [o_half, o_s, o_t] = positions;
  for (std::size_t o : positions) {
    if (o >= res.n_observations()) {
      throw std::invalid_argument("markov_from_ensemble: bad observation position");
    }
  }
  const auto &obs = res.observe();
  if (!(obs[o_half] < obs[o_s] && obs[o_s] < obs[o_t])) {
    throw std::invalid_argument("markov_from_ensemble: times must increase");
  }
  const std::size_t n = res.n_paths();
  const int m = res.tangent_dim();
  MarkovData data;
  data.present.resize(static_cast<Eigen::Index>(n), 1 + m);
  data.past.resize(n);
  data.response.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    const auto row = static_cast<Eigen::Index>(p);
    data.present(row, 0) = res.x1(p, o_s);
    for (int i = 0; i < m; ++i) {
      data.present(row, 1 + i) = res.xS(p, o_s, i);
    }
    switch (f) {
    case Functional::positive:
      data.past[p] = res.x1(p, o_half);
      data.response[p] = res.x1(p, o_t) > 0.0 ? 1.0 : 0.0;
      break;
    case Functional::normal:
      data.past[p] = res.x1(p, o_half);
      data.response[p] = std::tanh(res.x1(p, o_t));
      break;
    case Functional::tangential:
      data.past[p] = res.xS(p, o_half, 0);
      data.response[p] = std::tanh(res.xS(p, o_t, 0));
      break;
    }
  }
  TestReport r = markov_regression(data, options);
  r.name = "markov_" + to_string(f);
  r.params["functional"] = to_string(f);
  r.params["times"] = {static_cast<double>(obs[o_half]) * res.dt(),
                       static_cast<double>(obs[o_s]) * res.dt(),
                       static_cast<double>(obs[o_t]) * res.dt()};
  return r;
}

TestReport markov_regression_test(const ProcessConfig &config, double s,
                                  Functional f, std::size_t n_paths,
                                  std::uint64_t seed, unsigned workers,
                                  const MarkovOptions &options) {
  const double dt = config.T / static_cast<double>(config.n_steps);
  const std::int64_t k_half = std::llround(0.5 * s / dt);
  const std::int64_t k_s = std::llround(s / dt);
  if (!(k_half > 0 && k_half < k_s && k_s < config.n_steps)) {
    throw std::invalid_argument(
        "markov_regression_test: need 0 < s/2 < s < T on the time grid");
  }
  const auto res =
      ensemble(config, n_paths, seed, {{k_half, k_s, config.n_steps}, workers, false});
  TestReport r = markov_from_ensemble(res, {0, 1, 2}, f, options);
  r.params["q"] = config.skew.q;
  r.params["family"] = config.field.family_name();
  r.n_steps = config.n_steps;
  r.seed = seed;
  return r;
}

TestReport markov_control_test(double T, std::int64_t n_steps, double s,
                               std::size_t n_paths, std::uint64_t seed,
                               const MarkovOptions &options) {
  if (!(T > 0.0) || n_steps < 4) {
    throw std::invalid_argument("markov_control_test: bad time grid");
  }
  const double dt = T / static_cast<double>(n_steps);
  const std::int64_t k_half = std::llround(0.5 * s / dt);
  const std::int64_t k_s = std::llround(s / dt);
  if (!(k_half > 0 && k_half < k_s && k_s < n_steps)) {
    throw std::invalid_argument("markov_control_test: need 0 < s/2 < s < T on the grid");
  }
  const double sqrt_dt = std::sqrt(dt);
  MarkovData data;
  data.present.resize(static_cast<Eigen::Index>(n_paths), 1);
  data.past.resize(n_paths);
  data.response.resize(n_paths);
  for (std::size_t p = 0; p < n_paths; ++p) {
    PathRng rng(stream_seed(seed, p));
    double w = 0.0, top = 0.0;
    for (std::int64_t k = 1; k <= n_steps; ++k) {
      w += sqrt_dt * rng.normal();
      top = std::max(top, w);
      const double y = w + top;
      if (k == k_half) {
        data.past[p] = y;
      } else if (k == k_s) {
        data.present(static_cast<Eigen::Index>(p), 0) = y;
      }
      if (k == n_steps) {
        data.response[p] = std::tanh(y);
      }
    }
  }
  TestReport r = markov_regression(data, options);
  r.name = "markov_control";
  r.params["process"] = "W + running max of W";
  r.params["s"] = static_cast<double>(k_s) * dt;
  r.params["t"] = T;
  r.n_steps = n_steps;
  r.seed = seed;
  return r;
}

// ---------------------------------------------------------------------------
// Martingale batteries

const std::vector<std::string> &battery_names() {
  static const std::vector<std::string> names = {
      "one", "sign_x1", "clamp_zeta1", "eta_above_median", "clamp_w1"};
  return names;
}

TestReport martingale_battery(const EnsembleResult &res,
                              std::span<const std::pair<std::size_t, std::size_t>> pairs,
                              double threshold) {
  const std::size_t n = res.n_paths();
  const int m = res.tangent_dim();
  if (n < 2) {
    throw std::invalid_argument("martingale_battery: need at least two paths");
  }
  TestReport r;
  r.name = "martingale";
  r.threshold = threshold;
  r.n_paths = n;
  r.params["battery"] = battery_names();

  Json rows = Json::array();
  Json pair_list = Json::array();
  double worst = 0.0;
  std::vector<double> prod(n);
  for (const auto &[os, ot] : pairs) {
    if (os >= res.n_observations() || ot >= res.n_observations() ||
        res.observe()[os] >= res.observe()[ot]) {
      throw std::invalid_argument("martingale_battery: bad observation pair");
    }
    const double s = static_cast<double>(res.observe()[os]) * res.dt();
    const double t = static_cast<double>(res.observe()[ot]) * res.dt();
    pair_list.push_back({s, t});

    std::vector<std::vector<double>> xi(5, std::vector<double>(n));
    std::vector<double> eta_s = res.column(os, 1);
    std::vector<double> sorted = eta_s;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2),
                     sorted.end());
    const double median = sorted[n / 2];
    for (std::size_t p = 0; p < n; ++p) {
      xi[0][p] = 1.0;
      xi[1][p] = sign(res.x1(p, os));
      xi[2][p] = std::clamp(res.zeta(p, os, 0), -1.0, 1.0);
      xi[3][p] = res.eta(p, os) > median ? 1.0 : 0.0;
      xi[4][p] = std::clamp(res.w1(p, os), -1.0, 1.0);
    }

    auto run = [&](const std::string &quantity, auto &&value) {
      for (std::size_t b = 0; b < xi.size(); ++b) {
        for (std::size_t p = 0; p < n; ++p) {
          prod[p] = value(p) * xi[b][p];
        }
        const Moments mo = moments(prod);
        const double z = z_score(mo.mean, mo.variance, n);
        worst = std::max(worst, std::abs(z));
        rows.push_back({{"s", s},
                        {"t", t},
                        {"quantity", quantity},
                        {"xi", battery_names()[b]},
                        {"mean", mo.mean},
                        {"z", std::isfinite(z) ? Json(z) : Json("inf")}});
      }
    };
    for (int i = 0; i < m; ++i) {
      const std::string tag = "zeta_" + std::to_string(i + 1);
      run(tag + "_increment",
          [&](std::size_t p) { return res.zeta(p, ot, i) - res.zeta(p, os, i); });
      run(tag + "_bracket", [&](std::size_t p) {
        const double zt = res.zeta(p, ot, i), zs = res.zeta(p, os, i);
        return (zt * zt - res.eta(p, ot)) - (zs * zs - res.eta(p, os));
      });
    }
    for (int j = 0; j <= m; ++j) {
      auto w = [&](std::size_t p, std::size_t o) {
        return j == 0 ? res.w1(p, o) : res.wS(p, o, j - 1);
      };
      const std::string tag = "w_" + std::to_string(j + 1);
      run(tag + "_increment", [&](std::size_t p) { return w(p, ot) - w(p, os); });
      run(tag + "_square", [&](std::size_t p) {
        const double d = w(p, ot) - w(p, os);
        return d * d - (t - s);
      });
    }
  }
  r.params["pairs"] = pair_list;
  r.statistics["z_scores"] = rows;
  r.statistic = worst;
  r.decide();
  return r;
}

// ---------------------------------------------------------------------------
// Short-time limits

BumpFunction BumpFunction::unit_mass(VectorXd center, double radius, int power) {
  BumpFunction b{std::move(center), radius, power, 1.0};
  b.amplitude = 1.0 / b.integral();
  return b;
}

double BumpFunction::operator()(const VectorXd &z) const {
  return amplitude * bump_profile((z - center).squaredNorm(), radius, power);
}

namespace {

/// Integral over R^k of (1 - |u|^2 / rho^2)_+^p.
double ball_profile_integral(int k, double rho, int p) {
  return std::pow(rho, k) * std::pow(std::numbers::pi, 0.5 * k) *
         std::tgamma(p + 1.0) / std::tgamma(p + 1.0 + 0.5 * k);
}

} // namespace

double BumpFunction::integral() const {
  return amplitude * ball_profile_integral(static_cast<int>(center.size()), radius, power);
}

double BumpFunction::surface_integral(const HyperplaneFrame &frame) const {
  const double delta = center.dot(frame.normal());
  const double rho2 = radius * radius - delta * delta;
  if (rho2 <= 0.0) {
    return 0.0;
  }
  const double rho = std::sqrt(rho2);
  return amplitude * std::pow(rho / radius, 2 * power) *
         ball_profile_integral(frame.tangent_dim(), rho, power);
}

namespace {

/// Integral over the ball |u - c| < rho in R^k of f(u).
template <typename F>
double integrate_ball(int k, const VectorXd &c, double rho, F &&f) {
  using boost::math::quadrature::gauss;
  using boost::math::quadrature::gauss_kronrod;
  VectorXd u(k);
  if (k == 1) {
    return gauss_kronrod<double, 61>::integrate(
        [&](double x) {
          u(0) = x;
          return f(u);
        },
        c(0) - rho, c(0) + rho, 15, 1e-13);
  }
  if (k == 2) {
    constexpr int kAngles = 256;
    return gauss_kronrod<double, 61>::integrate(
        [&](double radial) {
          double sum = 0.0;
          for (int a = 0; a < kAngles; ++a) {
            const double psi = 2.0 * std::numbers::pi * a / kAngles;
            u(0) = c(0) + radial * std::cos(psi);
            u(1) = c(1) + radial * std::sin(psi);
            sum += f(u);
          }
          return radial * sum * 2.0 * std::numbers::pi / kAngles;
        },
        0.0, rho, 10, 1e-11);
  }
  // Tensor-product Gauss-Legendre on the enclosing box.
  constexpr int kPanels = 12;
  const auto &abscissa = gauss<double, 10>::abscissa();
  const auto &weights = gauss<double, 10>::weights();
  std::vector<double> nodes, wts;
  const double panel = 2.0 * rho / kPanels;
  for (int pnl = 0; pnl < kPanels; ++pnl) {
    const double mid = -rho + (pnl + 0.5) * panel;
    for (std::size_t i = 0; i < abscissa.size(); ++i) {
      for (int sgn : {-1, 1}) {
        if (abscissa[i] == 0.0 && sgn > 0) {
          continue;
        }
        nodes.push_back(mid + sgn * abscissa[i] * 0.5 * panel);
        wts.push_back(weights[i] * 0.5 * panel);
      }
    }
  }
  std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
  double total = 0.0;
  for (;;) {
    double w = 1.0;
    double r2 = 0.0;
    for (int d = 0; d < k; ++d) {
      const double off = nodes[idx[d]];
      u(d) = c(d) + off;
      w *= wts[idx[d]];
      r2 += off * off;
    }
    if (r2 < rho * rho) {
      total += w * f(u);
    }
    int d = 0;
    while (d < k && ++idx[d] == nodes.size()) {
      idx[d] = 0;
      ++d;
    }
    if (d == k) {
      break;
    }
  }
  return total;
}

} // namespace

LimitTargets limit_targets(const HyperplaneFrame &frame,
                           const CoefficientField &field, double q,
                           const BumpFunction &phi, const VectorXd &theta) {
  if (theta.size() != frame.dim() || phi.center.size() != frame.dim()) {
    throw std::invalid_argument("limit_targets: dimension mismatch");
  }
  const MatrixXd &basis = frame.tangent_basis();
  const VectorXd theta_S = basis.transpose() * theta;
  const double theta_nu = theta.dot(frame.normal());
  const auto centre = project(frame, phi.center);

  LimitTargets out;
  out.second_bulk = theta.squaredNorm() * phi.integral();
  const double rho2 = phi.radius * phi.radius - centre.x1 * centre.x1;
  if (rho2 > 0.0) {
    const double rho = std::sqrt(rho2);
    const int m = frame.tangent_dim();
    auto phi_S = [&](const VectorXd &u) { return phi(embed(frame, 0.0, u)); };
    out.drift = integrate_ball(m, centre.xS, rho, [&](const VectorXd &u) {
      return phi_S(u) * (q * theta_nu + field.alpha(u).dot(theta_S));
    });
    out.second_surface = integrate_ball(m, centre.xS, rho, [&](const VectorXd &u) {
      return phi_S(u) * theta_S.dot(field.beta(u) * theta_S);
    });
  }
  out.second = out.second_bulk + out.second_surface;
  out.fourth = 0.0;
  return out;
}

LimitEstimate estimate_limits_at(const HyperplaneFrame &frame,
                                 const CoefficientField &field, double q,
                                 const BumpFunction &phi, const VectorXd &theta,
                                 double t, const LimitOptions &o,
                                 std::uint64_t seed) {
  if (!(t > 0.0) || !(o.tangent_spacing > 0.0) || o.n_steps < 1) {
    throw std::invalid_argument("estimate_limits_at: bad t, spacing or n_steps");
  }
  const int m = frame.tangent_dim();
  ProcessConfig base;
  base.frame = frame;
  base.field = field;
  base.skew = {q, 0.0};
  base.xS0 = VectorXd::Zero(m);
  base.T = t;
  base.n_steps = o.n_steps;
  const Solver solver(base);
  const double h = solver.walk().h();
  const double g = o.tangent_spacing;

  const auto centre = project(frame, phi.center);
  const VectorXd theta_S = frame.tangent_basis().transpose() * theta;
  const double theta_nu = theta.dot(frame.normal());

  struct Node {
    std::int64_t site;
    VectorXd zS;
    double phi;
  };
  std::vector<Node> nodes;
  const auto site_lo = static_cast<std::int64_t>(std::ceil((centre.x1 - phi.radius) / h));
  const auto site_hi = static_cast<std::int64_t>(std::floor((centre.x1 + phi.radius) / h));
  const int half = static_cast<int>(std::ceil(phi.radius / g));
  std::vector<int> idx(static_cast<std::size_t>(m), -half);
  std::vector<VectorXd> tangent_nodes;
  for (;;) {
    VectorXd zS(m);
    for (int i = 0; i < m; ++i) {
      zS(i) = centre.xS(i) + g * (idx[i] + 0.5);
    }
    tangent_nodes.push_back(zS);
    int d = 0;
    while (d < m && ++idx[d] == half) {
      idx[d] = -half;
      ++d;
    }
    if (d == m) {
      break;
    }
  }
  double phi_sum = 0.0;
  for (std::int64_t site = site_lo; site <= site_hi; ++site) {
    for (const auto &zS : tangent_nodes) {
      const double value = phi(embed(frame, static_cast<double>(site) * h, zS));
      if (value > 0.0) {
        nodes.push_back({site, zS, value});
        phi_sum += value;
      }
    }
  }
  if (nodes.empty()) {
    throw std::invalid_argument("estimate_limits_at: test function has no grid support");
  }

  struct NodeResult {
    double mean[3], var[3];
    std::size_t paths;
  };
  std::vector<NodeResult> results(nodes.size());
  parallel_for(
      nodes.size(), o.workers,
      [&](std::size_t j) {
        const Node &node = nodes[j];
        const auto paths = std::max<std::size_t>(
            2, static_cast<std::size_t>(std::llround(
                   static_cast<double>(o.paths_per_t) * node.phi / phi_sum)));
        const Solver local = solver.restarted_at(static_cast<double>(node.site) * h, node.zS);
        const double z1 = local.walk().start();
        const auto res = ensemble(local, paths, stream_seed(seed, j), {{o.n_steps}, 1, false});
        double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
        for (std::size_t p = 0; p < paths; ++p) {
          double delta = (res.x1(p, 0) - z1) * theta_nu;
          for (int i = 0; i < m; ++i) {
            delta += (res.xS(p, 0, i) - node.zS(i)) * theta_S(i);
          }
          const double d2 = delta * delta;
          const double v[3] = {delta, d2, d2 * d2};
          for (int k = 0; k < 3; ++k) {
            sum[k] += v[k];
            sq[k] += v[k] * v[k];
          }
        }
        NodeResult out{};
        out.paths = paths;
        const double np = static_cast<double>(paths);
        for (int k = 0; k < 3; ++k) {
          out.mean[k] = sum[k] / np;
          out.var[k] = std::max(0.0, (sq[k] - np * out.mean[k] * out.mean[k]) / (np - 1.0));
        }
        results[j] = out;
      },
      1);

  LimitEstimate est;
  est.t = t;
  est.n_nodes = nodes.size();
  double value[3] = {0, 0, 0}, var[3] = {0, 0, 0};
  const double cell = h * std::pow(g, m);
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    const double w = cell * nodes[j].phi / t;
    for (int k = 0; k < 3; ++k) {
      value[k] += w * results[j].mean[k];
      var[k] += w * w * results[j].var[k] / static_cast<double>(results[j].paths);
    }
    est.n_paths += results[j].paths;
  }
  est.drift = value[0];
  est.second = value[1];
  est.fourth = value[2];
  est.drift_se = std::sqrt(var[0]);
  est.second_se = std::sqrt(var[1]);
  est.fourth_se = std::sqrt(var[2]);
  return est;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y,
                 std::span<const double> se) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n || se.size() != n) {
    throw std::invalid_argument("fit_line: need at least two matching points");
  }
  const bool weighted = std::all_of(se.begin(), se.end(), [](double s) { return s > 0.0; });
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = weighted ? 1.0 / (se[i] * se[i]) : 1.0;
  }
  double S = 0, Sx = 0, Sxx = 0, Sy = 0, Sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    S += w[i];
    Sx += w[i] * x[i];
    Sxx += w[i] * x[i] * x[i];
    Sy += w[i] * y[i];
    Sxy += w[i] * x[i] * y[i];
  }
  const double det = S * Sxx - Sx * Sx;
  if (!(std::abs(det) > 0.0)) {
    throw std::invalid_argument("fit_line: abscissae are all equal");
  }
  LineFit out;
  out.intercept = (Sxx * Sy - Sx * Sxy) / det;
  out.slope = (S * Sxy - Sx * Sy) / det;
  double v = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = w[i] * (Sxx - Sx * x[i]) / det;
    v += c * c * se[i] * se[i];
  }
  out.intercept_se = std::sqrt(v);
  return out;
}

namespace {

bool monotone(const std::vector<double> &v) {
  bool up = true, down = true;
  for (std::size_t i = 1; i < v.size(); ++i) {
    up = up && v[i] >= v[i - 1];
    down = down && v[i] <= v[i - 1];
  }
  return up || down;
}

} // namespace

LimitResult short_time_limits(const HyperplaneFrame &frame,
                              const CoefficientField &field, double q,
                              const BumpFunction &phi, const VectorXd &theta,
                              const LimitOptions &o) {
  if (o.t_list.size() < 3) {
    throw std::invalid_argument("short_time_limits: t_list needs at least 3 values");
  }
  for (std::size_t i = 0; i < o.t_list.size(); ++i) {
    if (!(o.t_list[i] > 0.0) || (i > 0 && !(o.t_list[i] < o.t_list[i - 1]))) {
      throw std::invalid_argument(
          "short_time_limits: t_list must be positive and strictly decreasing");
    }
  }
  LimitResult out;
  out.targets = limit_targets(frame, field, q, phi, theta);
  std::vector<double> x, drift, second, fourth, drift_se, second_se, fourth_se;
  for (std::size_t i = 0; i < o.t_list.size(); ++i) {
    const auto est = estimate_limits_at(frame, field, q, phi, theta, o.t_list[i], o,
                                        stream_seed(o.seed, i));
    out.rows.push_back(est);
    x.push_back(std::sqrt(est.t));
    drift.push_back(est.drift);
    second.push_back(est.second);
    fourth.push_back(est.fourth);
    drift_se.push_back(est.drift_se);
    second_se.push_back(est.second_se);
    fourth_se.push_back(est.fourth_se);
  }
  const auto fd = fit_line(x, drift, drift_se);
  const auto f2 = fit_line(x, second, second_se);
  const auto f4 = fit_line(x, fourth, fourth_se);
  auto &ex = out.extrapolated;
  ex.t = 0.0;
  ex.drift = fd.intercept;
  ex.second = f2.intercept;
  ex.fourth = f4.intercept;
  ex.drift_se = fd.intercept_se;
  ex.second_se = f2.intercept_se;
  ex.fourth_se = f4.intercept_se;
  for (const auto &row : out.rows) {
    ex.n_paths += row.n_paths;
  }

  const auto &tg = out.targets;
  const double drift_scale = std::max(
      {std::abs(tg.drift), theta.norm() * phi.surface_integral(frame), tg.second_bulk});
  const double second_scale = std::abs(tg.second);
  const double e_drift = std::abs(ex.drift - tg.drift) / drift_scale;
  const double e_second = std::abs(ex.second - tg.second) / second_scale;
  const double e_fourth = std::abs(ex.fourth - tg.fourth) / second_scale;

  TestReport &r = out.report;
  r.name = "limits";
  r.params = {{"q", q},
              {"normal", vector_json(frame.normal())},
              {"family", field.family_name()},
              {"theta", vector_json(theta)},
              {"bump",
               {{"center", vector_json(phi.center)},
                {"radius", phi.radius},
                {"power", phi.power},
                {"amplitude", phi.amplitude}}},
              {"t_list", o.t_list},
              {"n_steps_per_path", o.n_steps},
              {"tangent_spacing", o.tangent_spacing},
              {"paths_per_t", o.paths_per_t},
              {"extrapolation", "weighted least squares in sqrt(t)"}};
  auto entry = [](double est, double se, double target, double scale, double err) {
    return Json{{"extrapolated", est}, {"std_error", se}, {"target", target},
                {"scale", scale},      {"relative_error", err}};
  };
  r.statistics["drift"] = entry(ex.drift, ex.drift_se, tg.drift, drift_scale, e_drift);
  r.statistics["second_moment"] =
      entry(ex.second, ex.second_se, tg.second, second_scale, e_second);
  r.statistics["fourth_moment"] =
      entry(ex.fourth, ex.fourth_se, tg.fourth, second_scale, e_fourth);
  r.statistics["second_moment_bulk"] = tg.second_bulk;
  r.statistics["second_moment_surface"] = tg.second_surface;
  r.statistic = std::max({e_drift, e_second, e_fourth});
  r.threshold = o.tolerance;
  r.n_paths = ex.n_paths;
  r.n_steps = o.n_steps;
  r.seed = o.seed;
  if (!monotone(drift)) {
    r.notes.push_back("drift estimates are not monotone in t");
  }
  if (!monotone(second)) {
    r.notes.push_back("second-moment estimates are not monotone in t");
  }
  r.decide();
  return out;
}

void write_limits_csv(std::ostream &out, const LimitResult &result) {
  out.precision(17);
  out << "kind,t,drift_estimate,second_moment_estimate,fourth_moment_estimate,"
         "drift_se,second_moment_se,fourth_moment_se,n_paths\n";
  auto row = [&](const char *kind, const LimitEstimate &e) {
    out << kind << ',' << e.t << ',' << e.drift << ',' << e.second << ',' << e.fourth
        << ',' << e.drift_se << ',' << e.second_se << ',' << e.fourth_se << ','
        << e.n_paths << '\n';
  };
  for (const auto &e : result.rows) {
    row("estimate", e);
  }
  row("extrapolated", result.extrapolated);
  LimitEstimate target;
  target.drift = result.targets.drift;
  target.second = result.targets.second;
  target.fourth = result.targets.fourth;
  row("target", target);
}

// ---------------------------------------------------------------------------

TestReport restart_check(const ProcessConfig &config, std::size_t n_paths,
                         std::uint64_t seed) {
  const Solver solver(config);
  double worst = 0.0;
  for (std::size_t p = 0; p < n_paths; ++p) {
    const auto path = solver.solve(stream_seed(seed, p));
    PathRng pick(stream_seed(~seed, p));
    const auto s = static_cast<std::int64_t>(
        pick.engine()() % static_cast<std::uint64_t>(config.n_steps + 1));
    const auto re = solver.restart(path, s);
    const auto m = static_cast<std::size_t>(path.tangent_dim);
    for (std::size_t k = 0; k < re.size(); ++k) {
      const std::size_t j = k + static_cast<std::size_t>(s);
      worst = std::max(worst, std::abs(re.x1[k] - path.x1[j]));
      worst = std::max(worst, std::abs(re.eta[k] - path.eta[j]));
      for (std::size_t i = 0; i < m; ++i) {
        worst = std::max(worst, std::abs(re.xS[k * m + i] - path.xS[j * m + i]));
      }
    }
  }
  TestReport r;
  r.name = "restart";
  r.params = {{"q", config.skew.q}, {"family", config.field.family_name()}};
  r.statistic = worst;
  r.threshold = 0.0;
  r.strict = false;
  r.n_paths = n_paths;
  r.n_steps = config.n_steps;
  r.seed = seed;
  r.decide();
  return r;
}

} // namespace skewdiff
