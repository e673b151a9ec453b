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

#include <iosfwd>
#include <string>
#include <vector>

#include "mposim/config.hpp"
#include "mposim/verify.hpp"

namespace mposim {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int internal = 1;
inline constexpr int config = 2;
inline constexpr int numerical_guard = 3;
inline constexpr int check_failure = 4;
}  // namespace exit_code

struct RunOutcome {
  int exit_code = exit_code::ok;
  std::string output_dir;
  std::vector<std::string> files;  // written data files, manifest last
  std::string message;
  std::vector<CheckReport> reports;  // verify mode only
};

/// Dispatches on config.run.mode and writes every artifact plus manifest.json
/// into `output_dir` (config.run.output_dir when empty). Never throws for run
/// failures; they become exit codes and an error.json record.
RunOutcome run(const RunConfig& config, const std::string& output_dir = "", std::ostream* log = nullptr);

/// JSON array of check reports, one object per report, stable key order.
std::string reports_to_json(const std::vector<CheckReport>& reports);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

const char* version_string();

}  // namespace mposim
