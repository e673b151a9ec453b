// Copyright 2026 The mpo-sim Authors
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

// mpo-sim: run or verify a multi-photon optics configuration.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mposim/config.hpp"
#include "mposim/runner.hpp"

namespace {

int execute(const std::string& path, const std::vector<std::string>& overrides, const std::string& out, bool verify) {
  mposim::RunConfig cfg;
  try {
    cfg = mposim::load_config(path, overrides);
  } catch (const mposim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return mposim::exit_code::config;
  }
  if (verify) cfg.run.mode = mposim::RunMode::verify;
  const mposim::RunOutcome outcome = mposim::run(cfg, out, &std::cerr);
  if (verify && !outcome.reports.empty()) std::cout << mposim::reports_to_json(outcome.reports) << '\n';
  if (outcome.exit_code != mposim::exit_code::ok) {
    std::cerr << "mpo-sim: " << outcome.message << " (exit " << outcome.exit_code << ")\n";
  }
  std::cerr << "outputs in " << outcome.output_dir << '\n';
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulator and verification suite for multi-photon optical processes"};
  app.set_version_flag("--version", mposim::version_string());
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  std::string out;

  auto* run = app.add_subcommand("run", "Run the mode named in the config (master, jump, homodyne, verify)");
  run->add_option("config", config, "Config JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--override", overrides, "Replace a config value, e.g. run.dt=0.05 (repeatable)");
  run->add_option("--out", out, "Output directory (default: run.output_dir)");

  auto* verify = app.add_subcommand("verify", "Run the structural check suite and print a JSON report");
  verify->add_option("config", config, "Config JSON")->required()->check(CLI::ExistingFile);
  verify->add_option("--override", overrides, "Replace a config value (repeatable)");
  verify->add_option("--out", out, "Output directory (default: run.output_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mposim::exit_code::config;
  }
  return execute(config, overrides, out, verify->parsed());
}
