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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mposim/model.hpp"

namespace mposim {

/// Outcome of one numerical certificate.
///
/// margin is (allowed - measured) at the worst location, so a failing check
/// always has margin < 0 and a populated location.
struct CheckReport {
  std::string name;
  bool pass = true;
  std::string location;
  double worst = 0.0;
  double margin = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  std::size_t violations = 0;
  std::size_t excluded_dim = 0;
  std::string detail;
};

/// q^{2(n+m)} / (1 + eps q^{2(n+m)})^2. Requires eps > 0.
double L0(double q, double eps, int n, int m);

/// Largest eps accepted by the appendix lemmas: 1 / (2 r^{2(n+m)}), r the largest frequency.
double admissible_eps_bound(const ModelParams& params);

/// Uniform grid on [0, x_max] with `step`, plus r, 2r, the critical point
/// x_M = c r / (c - 1), c = 2^{2k/(2k-1)}, and a fine patch around x_M.
std::vector<double> lemma_rk_grid(double r, int k, double x_max, double step);

/// 1/(1+eps(x-r)^{2k})^2 <= 16^k/(1+eps x^{2k})^2 on `grid`; the worst grid
/// point is then refined by golden-section search on its neighbourhood.
/// worst is the largest ratio (1+eps x^{2k})^2 / (1+eps(x-r)^{2k})^2.
CheckReport lemma_rk_check(double r, int k, double eps, std::span<const double> grid);

/// Closed forms of the functionals L^x_k(q) = <x_k e|[C_eps, x_k] e> versus
/// direct sparse matrix elements, and the 32^{n+m} L_0(q) bound, on every
/// interior basis state. Returns {closed form, bound}. Throws
/// std::invalid_argument unless 0 < eps < admissible_eps_bound(params).
std::vector<CheckReport> scriptL_bound_check(const ModelParams& params, const ModeLayout& layout, double eps,
                                             int margin = 1, double tol = 1e-10);

/// Max entry of (x_k f(N) - f(N + shift) x_k) P over every ladder operator,
/// with shift = +w for annihilators and -w for creators.
CheckReport fN_intertwine_check(const ModeLayout& layout, const ModelParams& params,
                                const std::function<double(double)>& f, int margin = 1, double tol = 1e-12);

/// [H, N] P on the resonant model, then the same residual with wp[0] moved
/// by `detune` (must become nonzero). Returns {resonant, control}.
std::vector<CheckReport> HN_commute_check(const ModelParams& params, const ModeLayout& layout, int margin = 1,
                                          double tol = 1e-12, double detune = 0.1);

struct HypothesisOptions {
  int n_samples = 200;
  std::uint64_t seed = 1;
  int margin = 1;
  double tol = 1e-10;
};

/// Items (2), (6), (6*), (7) of the existence hypotheses and the Q/Z
/// domination witness, checked on the given coefficients.
std::vector<CheckReport> hypothesis_suite(const HPCoefficients& hp, const ModelParams& params,
                                          const ModeLayout& layout, const HypothesisOptions& options = {});
std::vector<CheckReport> hypothesis_suite(const ModelParams& params, const ModeLayout& layout,
                                          const HypothesisOptions& options = {});

struct VerifyOptions {
  double eps = 0.0;  // 0: half of admissible_eps_bound
  int margin = 1;
  HypothesisOptions hypotheses;
  double grid_step = 1e-3;
};

/// Every certificate in a fixed order; independent of thread scheduling.
std::vector<CheckReport> default_suite(const ModelParams& params, const ModeLayout& layout,
                                       const VerifyOptions& options = {});

bool all_pass(std::span<const CheckReport> reports);

}  // namespace mposim
