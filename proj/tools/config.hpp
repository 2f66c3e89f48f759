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
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "skewdiff/stats.hpp"

namespace skewdiff::cli {

/// Invalid configuration. what() is "<source>:<line>: <key>: <message>".
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct CoefficientParams {
  std::string family = "zero"; ///< zero | constant | clamped_linear | radial_bump
  VectorXd alpha;              ///< constant: alpha; radial_bump: direction
  MatrixXd beta;
  MatrixXd slope;   ///< clamped_linear
  VectorXd offset;  ///< clamped_linear
  double alpha_radius = 1.0;
  VectorXd center;  ///< radial_bump, tangent coordinates
  double radius = 1.0;
  int power = 3;
  std::optional<double> bound_K;
  std::optional<double> lipschitz_L;
};

/// Every knob of an experiment, with defaults. See README for the file
/// grammar.
struct ExperimentConfig {
  std::string source = "<defaults>";

  // run
  std::uint64_t seed = 1;
  unsigned workers = 1;
  std::string output = "skewdiff-out";

  // process
  int dimension = 2;
  VectorXd normal;  ///< empty means the first coordinate axis
  double q = 0.0;
  VectorXd x0;      ///< empty means the origin
  double T = 1.0;
  std::int64_t n_steps = 10000;

  CoefficientParams coefficients;

  // simulate
  std::size_t simulate_paths = 100000;
  std::vector<double> observe;  ///< times; empty means {T}
  std::size_t dump_paths = 0;

  // verify
  std::size_t verify_paths = 100000;
  std::vector<std::string> tests;  ///< empty means all
  std::map<std::string, double> thresholds;
  std::optional<double> threshold_override;
  std::size_t restart_paths = 100;
  std::vector<std::string> markov_functionals = {"positive", "tangential"};
  std::vector<double> ck_probes = {-1.0, -0.5, 0.0, 0.5, 1.0};

  // limits
  VectorXd theta;        ///< empty means the normal
  VectorXd bump_center;  ///< empty means the origin
  double bump_radius = 1.0;
  int bump_power = 3;
  LimitOptions limits;

  HyperplaneFrame frame() const;
  CoefficientField field() const;
  ProcessConfig process() const;

  /// Fully resolved configuration. Run knobs that cannot change results
  /// (workers, output) are left out unless `with_run_knobs`.
  Json to_json(bool with_run_knobs = false) const;
};

/// Names of the tests run by `verify`, in order.
const std::vector<std::string> &verify_test_names();

/// Default pass thresholds per verify test.
const std::map<std::string, double> &default_thresholds();

ExperimentConfig parse_config(const std::string &text, const std::string &source);
ExperimentConfig load_config(const std::string &path);

/// YAML rendering of a JSON document (used by print-config).
std::string to_yaml(const Json &doc);

} // namespace skewdiff::cli
