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

#include <stdexcept>
#include <string>

namespace mposim {

// A run guard tripped during integration: truncation leakage, trace drift or a
// time step too coarse for the first-order jump probability.
class NumericalGuardError : public std::runtime_error {
 public:
  enum class Kind { edge_leak, trace_drift, step_too_coarse };

  NumericalGuardError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline const char* to_string(NumericalGuardError::Kind kind) {
  switch (kind) {
    case NumericalGuardError::Kind::edge_leak:
      return "edge_leak";
    case NumericalGuardError::Kind::trace_drift:
      return "trace_drift";
    case NumericalGuardError::Kind::step_too_coarse:
      return "step_too_coarse";
  }
  return "unknown";
}

}  // namespace mposim
