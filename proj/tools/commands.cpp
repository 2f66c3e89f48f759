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

#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace skewdiff::cli {

namespace fs = std::filesystem;

namespace {

fs::path prepare_dir(const fs::path &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError(dir.string() + ": cannot create directory: " + ec.message());
  }
  return dir;
}

std::ofstream open_out(const fs::path &file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError(file.string() + ": cannot open for writing");
  }
  return out;
}

void close_out(std::ofstream &out, const fs::path &file) {
  out.close();
  if (!out) {
    throw IoError(file.string() + ": write failed");
  }
}

void write_json(const fs::path &file, const Json &doc) {
  auto out = open_out(file);
  out << doc.dump(2) << '\n';
  close_out(out, file);
}

/// '#' comment lines carrying the seed and the resolved configuration.
void write_csv_header(std::ostream &out, const ExperimentConfig &config) {
  out << "# skewdiff " << version_string() << '\n';
  out << "# seed: " << config.seed << '\n';
  out << "# config: " << config.to_json().dump() << '\n';
}

Json moments_json(const Moments &m) {
  return {{"mean", m.mean}, {"variance", m.variance}, {"std_error", m.std_error}};
}

/// Report document with the run's seed and resolved configuration.
Json artifact(const TestReport &report, const Json &config) {
  Json doc = report.to_json();
  doc["config"] = config;
  return doc;
}

std::int64_t grid_index(double t, double dt, std::int64_t n) {
  return std::clamp<std::int64_t>(std::llround(t / dt), 0, n);
}

} // namespace

// ---------------------------------------------------------------------------
// simulate

int run_simulate(const ExperimentConfig &config, std::ostream &log) {
  const ProcessConfig pc = config.process();
  const Solver solver(pc);
  const SkewWalk walk(pc.skew, pc.T, pc.n_steps);
  const double dt = walk.dt();

  std::vector<std::int64_t> observe;
  if (config.observe.empty()) {
    observe.push_back(pc.n_steps);
  } else {
    for (double t : config.observe) {
      observe.push_back(grid_index(t, dt, pc.n_steps));
    }
  }

  EnsembleOptions options;
  options.observe = observe;
  options.workers = config.workers;
  const EnsembleResult res = ensemble(solver, config.simulate_paths, config.seed, options);

  const fs::path dir = prepare_dir(config.output);
  const Json resolved = config.to_json();

  Json doc;
  doc["name"] = "simulate";
  doc["version"] = version_string();
  doc["seed"] = config.seed;
  doc["config"] = resolved;
  doc["n_paths"] = config.simulate_paths;
  doc["n_steps"] = pc.n_steps;
  doc["dt"] = dt;
  doc["h"] = walk.h();
  Json start;
  start["x1_0_requested"] = pc.skew.x1_0;
  start["x1_0"] = walk.start();
  start["snap_offset"] = walk.snap_offset();
  Json xs0 = Json::array();
  for (Eigen::Index i = 0; i < pc.xS0.size(); ++i) {
    xs0.push_back(pc.xS0(i));
  }
  start["xS0"] = xs0;
  doc["start"] = start;

  Json rows = Json::array();
  for (const ObservationSummary &s : res.summarize()) {
    Json row;
    row["index"] = s.index;
    row["t"] = s.t;
    row["x1"] = moments_json(s.x1);
    row["eta"] = moments_json(s.eta);
    Json xs = Json::array();
    for (const Moments &m : s.xS) {
      xs.push_back(moments_json(m));
    }
    row["xS"] = xs;
    row["fraction_positive"] = s.fraction_positive;
    row["fraction_visited"] = s.fraction_visited;
    const double expected = expected_local_time(s.t, walk.start());
    row["expected_local_time"] = expected;
    row["local_time_relative_error"] =
        expected > 0.0 ? s.eta.mean / expected - 1.0 : 0.0;
    rows.push_back(row);
    log << "t=" << s.t << "  E x1=" << s.x1.mean << "  E eta=" << s.eta.mean
        << " (closed form " << expected << ")  P(x1>0)=" << s.fraction_positive
        << '\n';
  }
  doc["observations"] = rows;
  write_json(dir / "summary.json", doc);

  if (config.dump_paths > 0) {
    std::vector<DiffusionPath> paths;
    std::vector<std::int64_t> ids;
    for (std::size_t p = 0; p < config.dump_paths; ++p) {
      paths.push_back(solver.solve(stream_seed(config.seed, p)));
      ids.push_back(static_cast<std::int64_t>(p));
    }
    const fs::path file = dir / "paths.csv";
    auto out = open_out(file);
    write_csv_header(out, config);
    write_paths_csv(out, paths, ids);
    close_out(out, file);
  }
  log << "wrote " << (dir / "summary.json").string() << '\n';
  return kExitPass;
}

// ---------------------------------------------------------------------------
// verify

int run_verify(const ExperimentConfig &config, std::ostream &log) {
  const ProcessConfig pc = config.process();
  const std::int64_t n = pc.n_steps;
  if (n < 4) {
    throw ConfigError(config.source + ": key 'process.n_steps': verify needs at least 4 steps");
  }
  const Solver solver(pc);
  const SkewWalk walk(pc.skew, pc.T, n);
  const double dt = walk.dt();
  const double x1_0 = walk.start();
  const double q = pc.skew.q;

  const auto threshold = [&](const std::string &name) {
    if (config.threshold_override) {
      return *config.threshold_override;
    }
    const auto it = config.thresholds.find(name);
    return it != config.thresholds.end() ? it->second : default_thresholds().at(name);
  };
  const std::vector<std::string> &tests =
      config.tests.empty() ? verify_test_names() : config.tests;
  const auto selected = [&](const char *name) {
    return std::find(tests.begin(), tests.end(), name) != tests.end();
  };

  // One ensemble observed at n/4, n/2 and n feeds every ensemble test.
  EnsembleOptions options;
  options.observe = {n / 4, n / 2, n};
  options.workers = config.workers;
  const std::size_t n_paths = config.verify_paths;
  const EnsembleResult res = ensemble(solver, n_paths, config.seed, options);
  const double t_end = static_cast<double>(n) * dt;
  const double s_mid = static_cast<double>(n / 2) * dt;

  const auto stamp = [&](TestReport r) {
    r.seed = config.seed;
    r.n_paths = n_paths;
    r.n_steps = n;
    return r;
  };

  std::vector<TestReport> reports;
  Json skipped = Json::array();

  if (selected("local_time")) {
    TestReport r;
    r.name = "local_time";
    const Moments eta = moments(res.column(2, 1));
    const double expected = expected_local_time(t_end, x1_0);
    r.params = {{"t", t_end}, {"x1_0", x1_0}};
    r.statistics = {{"mean_eta", eta.mean},
                    {"std_error", eta.std_error},
                    {"expected", expected}};
    r.statistic = std::abs(eta.mean / expected - 1.0);
    r.threshold = threshold("local_time");
    r.notes.push_back("statistic is |mean eta(t) / E eta(t) - 1|");
    r.decide();
    reports.push_back(stamp(r));
  }

  if (selected("skew_split")) {
    TestReport r;
    r.name = "skew_split";
    const double empirical = mid_tie_fraction_positive(res.column(2, 0));
    const double expected = 1.0 - skew_cdf(q, t_end, x1_0, 0.0);
    r.params = {{"q", q}, {"t", t_end}, {"x1_0", x1_0}};
    r.statistics = {{"fraction_positive", empirical}, {"expected", expected}};
    r.statistic = std::abs(empirical - expected);
    r.threshold = threshold("skew_split");
    r.notes.push_back("paths sitting at 0 count one half");
    r.decide();
    reports.push_back(stamp(r));
  }

  if (selected("ks_marginal")) {
    TestReport r;
    r.name = "ks_marginal";
    r.params = {{"q", q}, {"t", t_end}, {"x1_0", x1_0}};
    double worst = ks_distance(res.column(2, 0), [&](double a) {
      return skew_cdf(q, t_end, x1_0, a);
    });
    r.statistics["x1"] = worst;
    if (pc.field.is_zero()) {
      for (int i = 0; i < res.tangent_dim(); ++i) {
        const double mean = pc.xS0(i);
        const double sd = std::sqrt(t_end);
        const double d = ks_distance(res.column(2, 3 + static_cast<std::size_t>(i)),
                                     [&](double a) { return normal_cdf((a - mean) / sd); });
        r.statistics["xS_" + std::to_string(i + 1)] = d;
        worst = std::max(worst, d);
      }
    } else {
      r.notes.push_back("tangential marginals have no closed form for this field");
    }
    r.statistic = worst;
    r.threshold = threshold("ks_marginal");
    r.decide();
    reports.push_back(stamp(r));
  }

  if (selected("ck")) {
    const TestReport r = ck_from_samples(res.column(2, 0), q, s_mid, t_end - s_mid, x1_0,
                                         config.ck_probes, threshold("ck"));
    reports.push_back(stamp(r));
  }

  if (selected("markov")) {
    MarkovOptions mo;
    mo.threshold = threshold("markov");
    for (const auto &name : config.markov_functionals) {
      reports.push_back(stamp(markov_from_ensemble(res, {0, 1, 2},
                                                   functional_from_string(name), mo)));
    }
  }

  if (selected("martingale")) {
    const std::pair<std::size_t, std::size_t> pairs[] = {{0, 1}, {1, 2}, {0, 2}};
    reports.push_back(stamp(martingale_battery(res, pairs, threshold("martingale"))));
  }

  if (selected("restart")) {
    TestReport r = restart_check(pc, config.restart_paths, config.seed);
    r.threshold = threshold("restart");
    r.decide();
    reports.push_back(r);
  }

  if (selected("tangential_drift")) {
    if (!pc.field.is_constant()) {
      skipped.push_back({{"name", "tangential_drift"},
                         {"reason", "needs the constant coefficient family"}});
    } else {
      TestReport r;
      r.name = "tangential_drift";
      const auto &family = std::get<ConstantFamily>(pc.field.family());
      const double e_eta = expected_local_time(t_end, x1_0);
      r.params = {{"t", t_end}, {"x1_0", x1_0}, {"expected_eta", e_eta}};
      double worst = 0.0;
      Json rows = Json::array();
      for (int i = 0; i < res.tangent_dim(); ++i) {
        std::vector<double> dx = res.column(2, 3 + static_cast<std::size_t>(i));
        for (double &v : dx) {
          v -= pc.xS0(i);
        }
        const Moments m = moments(dx);
        const double expected = family.alpha(i) * e_eta;
        const double z = m.std_error > 0.0 ? (m.mean - expected) / m.std_error : 0.0;
        rows.push_back({{"coordinate", i + 1},
                        {"mean", m.mean},
                        {"expected", expected},
                        {"z", z}});
        worst = std::max(worst, std::abs(z));
      }
      r.statistics["coordinates"] = rows;
      r.statistic = worst;
      r.threshold = threshold("tangential_drift");
      r.notes.push_back("E (xS(t) - xS(0)) = alpha E eta(t) for constant coefficients");
      r.decide();
      reports.push_back(stamp(r));
    }
  }

  const fs::path dir = prepare_dir(fs::path(config.output) / "verify");
  const Json resolved = config.to_json();
  Json summary;
  summary["name"] = "verify";
  summary["version"] = version_string();
  summary["seed"] = config.seed;
  summary["config"] = resolved;
  Json list = Json::array();
  bool all_pass = true;
  for (const TestReport &r : reports) {
    write_json(dir / (r.name + ".json"), artifact(r, resolved));
    list.push_back({{"name", r.name},
                    {"statistic", r.to_json()["statistic"]},
                    {"threshold", r.threshold},
                    {"pass", r.pass}});
    all_pass = all_pass && r.pass;
    log << (r.pass ? "PASS " : "FAIL ") << r.name << ": statistic " << r.statistic
        << (r.strict ? " < " : " <= ") << r.threshold << '\n';
  }
  for (const auto &s : skipped) {
    log << "SKIP " << s["name"].get<std::string>() << ": "
        << s["reason"].get<std::string>() << '\n';
  }
  summary["tests"] = list;
  summary["skipped"] = skipped;
  summary["pass"] = all_pass;
  write_json(fs::path(config.output) / "verify.json", summary);
  return all_pass ? kExitPass : kExitFail;
}

// ---------------------------------------------------------------------------
// limits

int run_limits(const ExperimentConfig &config, std::ostream &log) {
  const HyperplaneFrame frame = config.frame();
  const CoefficientField field = config.field();
  const VectorXd theta = config.theta.size() == 0 ? frame.normal() : config.theta;
  const VectorXd center = config.bump_center.size() == 0
                              ? VectorXd::Zero(config.dimension)
                              : config.bump_center;
  const BumpFunction phi =
      BumpFunction::unit_mass(center, config.bump_radius, config.bump_power);

  LimitOptions options = config.limits;
  options.seed = config.seed;
  options.workers = config.workers;
  const LimitResult result = short_time_limits(frame, field, config.q, phi, theta, options);

  const fs::path dir = prepare_dir(config.output);
  const Json resolved = config.to_json();
  {
    const fs::path file = dir / "limits.csv";
    auto out = open_out(file);
    write_csv_header(out, config);
    write_limits_csv(out, result);
    close_out(out, file);
  }
  TestReport report = result.report;
  report.seed = config.seed;
  write_json(dir / "limits_report.json", artifact(report, resolved));

  for (const LimitEstimate &e : result.rows) {
    log << "t=" << e.t << "  drift " << e.drift << " +- " << e.drift_se << "  second "
        << e.second << " +- " << e.second_se << "  fourth " << e.fourth << '\n';
  }
  log << "extrapolated drift " << result.extrapolated.drift << " (target "
      << result.targets.drift << "), second " << result.extrapolated.second
      << " (target " << result.targets.second << "), fourth "
      << result.extrapolated.fourth << '\n';
  log << (report.pass ? "PASS " : "FAIL ") << report.name << ": statistic "
      << report.statistic << " < " << report.threshold << '\n';
  return report.pass ? kExitPass : kExitFail;
}

} // namespace skewdiff::cli
