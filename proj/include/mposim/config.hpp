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

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mposim/dynamics.hpp"
#include "mposim/model.hpp"
#include "mposim/trajectories.hpp"
#include "mposim/verify.hpp"

namespace mposim {

/// Bad or inconsistent run configuration. `line` is 0 when the offending value
/// did not come from the file (overrides, missing fields).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, int line, const std::string& message);

  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

enum class RunMode { master, jump, homodyne, verify };

const char* to_string(RunMode mode);

struct InitialState {
  enum class Kind { vacuum, basis, coherent };
  Kind kind = Kind::vacuum;
  std::vector<int> occupations;
  std::vector<Complex> amplitudes;
};

struct RunSettings {
  RunMode mode = RunMode::master;
  double t_final = 1.0;
  double dt = 1e-2;
  int grid_points = 11;  // snapshot/sample times, including t = 0 and t_final
  std::size_t n_traj = 100;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> observables;
  std::string output_dir = "out";
  FrameKind frame = FrameKind::rotating;
  int record_stride = 1;
  StateMethod method = StateMethod::automatic;
  std::size_t density_max_dim = 64;
};

struct Tolerances {
  double leak_tol = 1e-6;
  double trace_tol = 1e-6;
  bool check_positivity = true;
};

struct RunConfig {
  std::string path;
  ModeLayout layout;
  ModelParams model;
  DetectorAssignment detectors;
  bool count_homodyne_in_jump_mode = false;
  InitialState initial;
  RunSettings run;
  Tolerances tolerances;
  VerifyOptions verify;
  /// The effective configuration (file plus overrides) as compact JSON.
  std::string echo;
  std::vector<std::string> overrides;
};

/// Parses and validates a config file; `overrides` are "dotted.key=value"
/// strings applied before validation (value parsed as JSON, else taken as a string).
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Same, from JSON text; `origin` only labels diagnostics.
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {},
                       const std::string& origin = "<string>");

struct NamedObservable {
  std::string name;
  OperatorMatrix op;
};

/// n_<mode> -> a†a, quad_<mode>@<phase> -> e^{-i phase} a + e^{i phase} a†.
NamedObservable resolve_observable(const std::string& name, const ModeLayout& layout);

/// Uniform grid of `points` times on [0, t_final], each rounded to a multiple of dt.
std::vector<double> time_grid(const RunSettings& run);

QuantumState initial_state(const RunConfig& config);

}  // namespace mposim
