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

// skewdiff command line: simulate | verify | limits | print-config.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"

namespace {

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::string> out;
};

void add_flags(CLI::App *cmd, Flags &flags) {
  cmd->add_option("--config", flags.config_path, "Experiment configuration (YAML)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", flags.seed, "Master seed (overrides the file)");
  cmd->add_option("--workers", flags.workers, "Worker threads (does not change results)")
      ->check(CLI::Range(1u, 1024u));
  cmd->add_option("--out", flags.out, "Output directory (overrides the file)");
}

skewdiff::cli::ExperimentConfig resolve(const Flags &flags) {
  skewdiff::cli::ExperimentConfig config =
      flags.config_path.empty() ? skewdiff::cli::parse_config("", "<defaults>")
                                : skewdiff::cli::load_config(flags.config_path);
  if (flags.seed) {
    config.seed = *flags.seed;
  }
  if (flags.workers) {
    config.workers = *flags.workers;
  }
  if (flags.out) {
    config.output = *flags.out;
  }
  return config;
}

} // namespace

int main(int argc, char **argv) {
  using namespace skewdiff::cli;

  CLI::App app{"Simulation and verification of skew diffusions with a "
               "hyperplane local-time interaction"};
  app.set_version_flag("--version", skewdiff::version_string());
  app.require_subcommand(1);

  Flags flags;
  CLI::App *simulate = app.add_subcommand("simulate", "Simulate an ensemble and summarize it");
  CLI::App *verify = app.add_subcommand("verify", "Run the statistical verification suite");
  CLI::App *limits = app.add_subcommand("limits", "Short-time limit study");
  CLI::App *print = app.add_subcommand("print-config", "Print the fully resolved configuration");
  for (CLI::App *cmd : {simulate, verify, limits, print}) {
    add_flags(cmd, flags);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitError;
  }

  try {
    const ExperimentConfig config = resolve(flags);
    if (print->parsed()) {
      std::cout << to_yaml(config.to_json(true));
      return kExitPass;
    }
    if (simulate->parsed()) {
      return run_simulate(config, std::cout);
    }
    if (verify->parsed()) {
      return run_verify(config, std::cout);
    }
    return run_limits(config, std::cout);
  } catch (const ConfigError &e) {
    std::cerr << "configuration error: " << e.what() << '\n';
  } catch (const IoError &e) {
    std::cerr << "i/o error: " << e.what() << '\n';
  } catch (const std::invalid_argument &e) {
    std::cerr << "configuration error: " << e.what() << '\n';
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return kExitError;
}
