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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "config.hpp"

namespace skewdiff::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path &file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch_dir(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / ("skewdiff_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Runs the CLI binary; returns its exit status and captures stderr.
int run_cli(const std::string &args, std::string *err = nullptr) {
  const fs::path log = fs::temp_directory_path() / "skewdiff_cli_test_stderr.txt";
  const std::string cmd =
      std::string(SKEWDIFF_CLI) + " " + args + " > /dev/null 2> " + log.string();
  const int status = std::system(cmd.c_str());
  if (err != nullptr) {
    *err = slurp(log);
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void expect_config_error(const std::string &text, const std::string &needle) {
  try {
    (void)parse_config(text, "test.yaml");
    ADD_FAILURE() << "accepted: " << text;
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

const char *kSmall = R"(
seed: 99
process:
  dimension: 3
  normal: [0.0, 1.0, 1.0]
  q: 0.4
  x0: [0.1, 0.3, -0.2]
  n_steps: 400
coefficients:
  family: clamped_linear
  slope: [[0.2, 0.0], [0.1, -0.3]]
  offset: [0.1, 0.0]
  alpha_radius: 0.5
  beta: 0.3
simulate:
  n_paths: 3000
  observe: [0.25, 1.0]
  dump_paths: 3
verify:
  n_paths: 3000
  restart_paths: 10
  markov_functionals: [positive, normal, tangential]
limits:
  t_list: [0.02, 0.01, 0.005]
  n_steps: 16
  tangent_spacing: 0.1
  paths_per_t: 20000
)";

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, DefaultsResolve) {
  const ExperimentConfig c = parse_config("", "empty.yaml");
  EXPECT_EQ(c.dimension, 2);
  EXPECT_EQ(c.q, 0.0);
  EXPECT_EQ(c.n_steps, 10000);
  const Json j = c.to_json();
  EXPECT_FALSE(j.contains("workers"));
  EXPECT_TRUE(c.to_json(true).contains("workers"));
  EXPECT_EQ(j["process"]["normal"], Json::array({1.0, 0.0}));
  EXPECT_EQ(j["verify"]["tests"].size(), verify_test_names().size());
}

TEST(Config, PrintedConfigParsesBackToItself) {
  for (const char *text : {"", kSmall}) {
    const ExperimentConfig c = parse_config(text, "a.yaml");
    const std::string printed = to_yaml(c.to_json(true));
    const ExperimentConfig back = parse_config(printed, "b.yaml");
    EXPECT_EQ(to_yaml(back.to_json(true)), printed);
  }
}

TEST(Config, ShippedConfigsParse) {
  for (const auto &entry : fs::directory_iterator(SKEWDIFF_CONFIGS)) {
    EXPECT_NO_THROW((void)load_config(entry.path().string())) << entry.path();
  }
}

TEST(Config, ErrorsNameKeyAndLine) {
  expect_config_error("process:\n  dimension: 2\n  q: 1.5\n", "test.yaml:3: key 'process.q'");
  expect_config_error("process:\n  qq: 1\n", "test.yaml:2: key 'process.qq': unknown key");
  expect_config_error("sead: 1\n", "key 'sead': unknown key");
  expect_config_error("process:\n  T: soon\n", "key 'process.T': expected a number");
  expect_config_error("process:\n  T: -1\n", "key 'process.T': must be positive");
  expect_config_error("process:\n  n_steps: 0\n", "key 'process.n_steps'");
  expect_config_error("process:\n  n_steps: 2.5\n", "key 'process.n_steps'");
  expect_config_error("seed: -4\n", "key 'seed'");
  expect_config_error("process:\n  x0: [1, 2, 3]\n", "key 'process.x0': expected 2 entries");
  expect_config_error("process:\n  normal: [0, 0]\n", "key 'process.normal'");
  expect_config_error("coefficients:\n  family: spline\n", "key 'coefficients.family'");
  expect_config_error("coefficients:\n  family: zero\n  alpha: [1]\n",
                      "key 'coefficients.alpha': not a parameter");
  expect_config_error("coefficients:\n  family: constant\n  beta: [[1, 2], [3]]\n",
                      "key 'coefficients.beta'");
  expect_config_error("coefficients:\n  family: constant\n  beta: -1\n",
                      "test.yaml:1: key 'coefficients'");
  expect_config_error("coefficients:\n  family: clamped_linear\n  slope: 2\n"
                      "  lipschitz_L: 0.5\n",
                      "key 'coefficients': coefficient field violates");
  expect_config_error("simulate:\n  observe: [2]\n", "key 'simulate.observe'");
  expect_config_error("verify:\n  tests: [everything]\n", "key 'verify.tests'");
  expect_config_error("verify:\n  thresholds: {ks: 0.1}\n", "key 'verify.thresholds.ks'");
  expect_config_error("verify:\n  markov_functionals: [cosine]\n",
                      "key 'verify.markov_functionals'");
  expect_config_error("limits:\n  t_list: [0.01, 0.02, 0.005]\n", "key 'limits.t_list'");
  expect_config_error("limits:\n  bump: {width: 1}\n", "key 'limits.bump.width'");
  expect_config_error("process: [\n", "test.yaml:2: syntax error");
}

TEST(Config, ThresholdOverrideResolvesEverywhere) {
  const ExperimentConfig c =
      parse_config("verify:\n  threshold: 0\n  thresholds: {ck: 0.5}\n", "t.yaml");
  for (const auto &[name, value] : c.to_json()["verify"]["thresholds"].items()) {
    EXPECT_EQ(value.get<double>(), 0.0) << name;
  }
}

// ---------------------------------------------------------------------------
// Commands in process

TEST(Simulate, OutputsAreIdenticalAcrossRunsAndWorkerCounts) {
  ExperimentConfig c = parse_config(kSmall, "small.yaml");
  const fs::path a = scratch_dir("sim_a"), b = scratch_dir("sim_b");
  std::ostringstream log;
  c.output = a.string();
  c.workers = 1;
  ASSERT_EQ(run_simulate(c, log), kExitPass);
  c.output = b.string();
  c.workers = 3;
  ASSERT_EQ(run_simulate(c, log), kExitPass);
  for (const char *file : {"summary.json", "paths.csv"}) {
    const std::string x = slurp(a / file);
    ASSERT_FALSE(x.empty()) << file;
    EXPECT_EQ(x, slurp(b / file)) << file;
  }
  const std::string csv = slurp(a / "paths.csv");
  EXPECT_EQ(csv.rfind("# skewdiff ", 0), 0U);
  EXPECT_NE(csv.find("# seed: 99\n"), std::string::npos);
  EXPECT_NE(csv.find("\npath_id,t,x1,xS_1,xS_2,eta\n"), std::string::npos);
}

TEST(Verify, ReportsAreIdenticalAcrossWorkerCounts) {
  ExperimentConfig c = parse_config(kSmall, "small.yaml");
  const fs::path a = scratch_dir("ver_a"), b = scratch_dir("ver_b");
  std::ostringstream log;
  c.output = a.string();
  c.workers = 1;
  const int code = run_verify(c, log);
  c.output = b.string();
  c.workers = 4;
  EXPECT_EQ(run_verify(c, log), code);
  EXPECT_EQ(slurp(a / "verify.json"), slurp(b / "verify.json"));
  std::size_t n = 0;
  for (const auto &entry : fs::directory_iterator(a / "verify")) {
    EXPECT_EQ(slurp(entry.path()), slurp(b / "verify" / entry.path().filename()));
    const Json doc = Json::parse(slurp(entry.path()));
    for (const char *key : {"name", "version", "seed", "params", "statistic",
                            "threshold", "pass", "config"}) {
      EXPECT_TRUE(doc.contains(key)) << entry.path() << " lacks " << key;
    }
    EXPECT_EQ(doc["seed"], 99);
    ++n;
  }
  // Eight tests; markov gives one report per functional; tangential_drift is
  // skipped for this family.
  EXPECT_EQ(n, 9U);
  const Json summary = Json::parse(slurp(a / "verify.json"));
  EXPECT_EQ(summary["skipped"][0]["name"], "tangential_drift");
}

TEST(Limits, NoSurfaceTermsGiveZeroLimitsAndRepeatExactly) {
  ExperimentConfig c = parse_config(kSmall, "small.yaml");
  c.dimension = 2;
  c.normal.resize(0);
  c.x0.resize(0);
  c.q = 0.0;
  c.coefficients = CoefficientParams{};
  c.limits.paths_per_t = 400000;
  const fs::path a = scratch_dir("lim_a"), b = scratch_dir("lim_b");
  std::ostringstream log;
  c.output = a.string();
  c.workers = 1;
  const int code = run_limits(c, log);
  c.output = b.string();
  c.workers = 2;
  EXPECT_EQ(run_limits(c, log), code);
  EXPECT_EQ(slurp(a / "limits.csv"), slurp(b / "limits.csv"));
  EXPECT_EQ(slurp(a / "limits_report.json"), slurp(b / "limits_report.json"));

  const Json report = Json::parse(slurp(a / "limits_report.json"));
  const Json &s = report["statistics"];
  ASSERT_TRUE(s.contains("drift")) << report.dump(2);
  // Drift target 0: the intercept must vanish within its own noise.
  EXPECT_EQ(s["drift"]["target"].get<double>(), 0.0);
  EXPECT_LT(std::abs(s["drift"]["extrapolated"].get<double>()),
            4.0 * s["drift"]["std_error"].get<double>() + 1e-3)
      << report.dump(2);
  EXPECT_LT(std::abs(s["fourth_moment"]["extrapolated"].get<double>()),
            0.1 * s["second_moment"]["target"].get<double>());
  EXPECT_EQ(code, kExitPass) << report.dump(2);
}

// ---------------------------------------------------------------------------
// The binary: exit codes and messages

TEST(Binary, MinimalConfigSummaryHasRequiredKeys) {
  const fs::path out = scratch_dir("minimal");
  ASSERT_EQ(run_cli("simulate --config " + std::string(SKEWDIFF_CONFIGS) +
                    "/minimal.yaml --out " + out.string()),
            kExitPass);
  const Json doc = Json::parse(slurp(out / "summary.json"));
  for (const char *key : {"version", "seed", "config", "n_paths", "n_steps", "start",
                          "observations"}) {
    EXPECT_TRUE(doc.contains(key)) << key;
  }
  const Json &row = doc["observations"][0];
  for (const char *key : {"t", "x1", "eta", "xS", "fraction_positive",
                          "fraction_visited", "expected_local_time"}) {
    EXPECT_TRUE(row.contains(key)) << key;
  }
  EXPECT_EQ(doc["config"]["process"]["dimension"], 2);
  EXPECT_NEAR(row["eta"]["mean"].get<double>(), row["expected_local_time"].get<double>(),
              0.025 * row["expected_local_time"].get<double>());
}

TEST(Binary, InvalidSkewnessExitsTwoNamingTheKey) {
  const fs::path dir = scratch_dir("bad_q");
  std::ofstream(dir / "bad.yaml") << "process:\n  dimension: 2\n  q: 1.5\n";
  std::string err;
  EXPECT_EQ(run_cli("simulate --config " + (dir / "bad.yaml").string() + " --out " +
                        (dir / "out").string(),
                    &err),
            kExitError);
  EXPECT_NE(err.find("bad.yaml:3: key 'process.q'"), std::string::npos) << err;
  EXPECT_FALSE(fs::exists(dir / "out" / "summary.json"));
}

TEST(Binary, ZeroThresholdExitsOne) {
  const fs::path dir = scratch_dir("zero_threshold");
  std::string text = kSmall;
  text.insert(text.find("verify:\n") + 8, "  threshold: 0\n");
  std::ofstream(dir / "c.yaml") << text;
  EXPECT_EQ(run_cli("verify --config " + (dir / "c.yaml").string() + " --out " +
                    (dir / "out").string()),
            kExitFail);
  const Json summary = Json::parse(slurp(dir / "out" / "verify.json"));
  EXPECT_FALSE(summary["pass"].get<bool>());
}

TEST(Binary, UsageAndIoErrorsExitTwo) {
  EXPECT_EQ(run_cli("simulate --config /nonexistent/c.yaml"), kExitError);
  EXPECT_EQ(run_cli("frobnicate"), kExitError);
  EXPECT_EQ(run_cli(""), kExitError);
  EXPECT_EQ(run_cli("simulate --workers 0"), kExitError);
  const fs::path dir = scratch_dir("io");
  std::ofstream(dir / "file") << "x";
  std::ofstream(dir / "c.yaml") << "simulate:\n  n_paths: 10\nprocess:\n  n_steps: 10\n";
  std::string err;
  EXPECT_EQ(run_cli("simulate --config " + (dir / "c.yaml").string() + " --out " +
                        (dir / "file" / "sub").string(),
                    &err),
            kExitError);
  EXPECT_NE(err.find("i/o error"), std::string::npos) << err;
}

TEST(Binary, SeedFlagOverridesTheFile) {
  const fs::path dir = scratch_dir("seed_flag");
  std::ofstream(dir / "c.yaml") << "seed: 5\nsimulate:\n  n_paths: 50\nprocess:\n  n_steps: 20\n";
  const std::string base = "simulate --config " + (dir / "c.yaml").string();
  ASSERT_EQ(run_cli(base + " --out " + (dir / "a").string()), kExitPass);
  ASSERT_EQ(run_cli(base + " --seed 6 --out " + (dir / "b").string()), kExitPass);
  const Json a = Json::parse(slurp(dir / "a" / "summary.json"));
  const Json b = Json::parse(slurp(dir / "b" / "summary.json"));
  EXPECT_EQ(a["seed"], 5);
  EXPECT_EQ(b["seed"], 6);
  EXPECT_EQ(b["config"]["seed"], 6);
  EXPECT_NE(a["observations"], b["observations"]);
}

} // namespace
} // namespace skewdiff::cli
