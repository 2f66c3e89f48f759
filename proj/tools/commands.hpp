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

#include <iosfwd>
#include <stdexcept>

#include "config.hpp"

namespace skewdiff::cli {

/// Process exit codes.
inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitError = 2;

/// Output directory or file could not be written.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Each command writes its artifacts below config.output and a short
/// human-readable log to `log`. Returns kExitPass or kExitFail; throws
/// ConfigError or IoError.
int run_simulate(const ExperimentConfig &config, std::ostream &log);
int run_verify(const ExperimentConfig &config, std::ostream &log);
int run_limits(const ExperimentConfig &config, std::ostream &log);

} // namespace skewdiff::cli
