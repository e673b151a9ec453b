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

#include <cmath>

#include "doctest.h"
#include "mposim/verify.hpp"

using namespace mposim;

namespace {

ModelParams dpo(const ModeLayout& layout) {
  ModelParams p = zero_params(layout, {1.0, 1.0}, {2.0}, 0.2);
  p.alpha[0] = {0.3, 0.3};
  p.alpha[1] = {0.3};
  p.alpha[2] = {0.3, 0.3};
  p.alpha[3] = {0.6};
  p.alpha[4] = {0.2, 0.2};
  p.alpha[5] = {0.2};
  p.drive.lambda = 0.1;
  return p;
}

const CheckReport& find(const std::vector<CheckReport>& reps, const std::string& name) {
  for (const auto& r : reps) {
    if (r.name == name) return r;
  }
  throw std::runtime_error("no report " + name);
}

}  // namespace

TEST_CASE("L0 values") {
  CHECK(L0(0.0, 1.0, 1, 0) == 0.0);
  CHECK(L0(1.0, 1.0, 1, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(L0(1e6, 1.0, 1, 0) < 1e-11);
  CHECK(L0(1e200, 1.0, 2, 1) == 0.0);
  CHECK_THROWS(L0(1.0, 0.0, 1, 1));
}

TEST_CASE("lemma_rk: admissible eps passes, eps = 10 fails near x_M") {
  std::vector<double> grid;
  for (int i = 0; i <= 100000; ++i) grid.push_back(1e-3 * i);
  const CheckReport ok = lemma_rk_check(1.0, 1, 0.49, grid);
  CHECK(ok.pass);
  CHECK(ok.worst <= 16.0);
  CHECK(ok.margin >= 0.0);

  const CheckReport bad = lemma_rk_check(1.0, 1, 10.0, grid);
  CHECK_FALSE(bad.pass);
  CHECK(bad.margin < 0.0);
  CHECK(bad.violations > 0);
  CHECK_FALSE(bad.location.empty());
  // ratio (1+10x^2)^2/(1+10(x-1)^2)^2 peaks a little above x = 1
  const double x = std::stod(bad.location.substr(2));
  CHECK(x > 1.0);
  CHECK(x < 1.5);

  // the x >= 2r branch holds for any eps
  std::vector<double> far;
  for (int i = 0; i <= 10000; ++i) far.push_back(2.0 + 1e-2 * i);
  for (double eps : {1e-3, 1.0, 10.0, 1e4}) CHECK(lemma_rk_check(1.0, 1, eps, far).pass);
  for (int k = 1; k <= 4; ++k) {
    const double r = 2.0;
    const double eps = 0.99 / (2.0 * std::pow(r, 2 * k));
    CHECK(lemma_rk_check(r, k, eps, lemma_rk_grid(r, k, 100.0, 1e-3)).pass);
  }
}

TEST_CASE("lemma_rk_grid contains the critical points") {
  const auto g = lemma_rk_grid(1.0, 1, 10.0, 0.1);
  CHECK(std::is_sorted(g.begin(), g.end()));
  CHECK(std::find(g.begin(), g.end(), 4.0 / 3.0) != g.end());
  CHECK(std::find(g.begin(), g.end(), 2.0) != g.end());
}

TEST_CASE("scriptL: closed forms match matrix elements, bound fails only at the vacuum") {
  const ModeLayout layout = make_layout(2, 1, {6, 6, 4});
  const ModelParams p = dpo(layout);
  const double eps = 0.5 * admissible_eps_bound(p);
  CHECK(admissible_eps_bound(p) == doctest::Approx(1.0 / 128.0));
  const auto reps = scriptL_bound_check(p, layout, eps);
  REQUIRE(reps.size() == 2);
  CHECK(reps[0].pass);
  CHECK(reps[0].worst <= 1e-10);
  CHECK(reps[0].excluded_dim == excluded_dimension(layout, 1));
  CHECK(reps[0].checked == 6 * (layout.dim() - reps[0].excluded_dim));
  // creation functionals at q = 0: L0(w) > 0 = 32^(n+m) L0(0)
  CHECK_FALSE(reps[1].pass);
  CHECK(reps[1].violations == 3);
  CHECK(reps[1].location.find("e(0,0;0)") != std::string::npos);
  CHECK(reps[1].detail.find("q=0") != std::string::npos);
  CHECK(reps[1].margin == doctest::Approx(-L0(2.0, eps, 2, 1)));

  CHECK_THROWS_AS(scriptL_bound_check(p, layout, 1.0 / 128.0), std::invalid_argument);
  CHECK_THROWS_AS(scriptL_bound_check(p, layout, 0.0), std::invalid_argument);
}

TEST_CASE("scriptL: direct oracle on a single mode") {
  const ModeLayout layout = make_layout(1, 1, {8, 8});
  const ModelParams p = zero_params(layout, {1.0}, {1.0}, 0.5);
  const double eps = 0.1;
  const auto reps = scriptL_bound_check(p, layout, eps);
  CHECK(reps[0].pass);
  // a at e(3;0): 3 (L0(2) - L0(3))
  const double expect = 3.0 * (L0(2.0, eps, 1, 1) - L0(3.0, eps, 1, 1));
  const Matrix a = annihilation(layout, 0).dense();
  Eigen::VectorXd c(static_cast<Eigen::Index>(layout.dim()));
  const Eigen::VectorXd q = number_spectrum(p, layout);
  for (Eigen::Index i = 0; i < q.size(); ++i) c[i] = L0(q[i], eps, 1, 1);
  const Matrix cm = c.cast<Complex>().asDiagonal();
  const std::array occ{3, 0};
  Vector e = Vector::Zero(static_cast<Eigen::Index>(layout.dim()));
  e[static_cast<Eigen::Index>(layout.index(occ))] = 1.0;
  const Complex direct = (a * e).dot((cm * a - a * cm) * e);
  CHECK(std::abs(direct - expect) < 1e-13);
}

TEST_CASE("f(N) intertwining") {
  const ModeLayout layout = make_layout(2, 1, {6, 6, 4});
  const ModelParams p = dpo(layout);
  const CheckReport one = fN_intertwine_check(layout, p, [](double) { return 1.0; });
  CHECK(one.pass);
  CHECK(one.worst == 0.0);
  const double eps = 0.5 * admissible_eps_bound(p);
  const CheckReport ce = fN_intertwine_check(layout, p, [&](double x) { return L0(x, eps, 2, 1); });
  CHECK(ce.pass);
  CHECK(ce.worst <= 1e-12);
  CHECK(ce.excluded_dim == excluded_dimension(layout, 1));

  // f(x) = x on one mode is [a, N] = w a, compared with dense matrices
  const ModeLayout single = make_layout(1, 1, {7, 7});
  const ModelParams sp = zero_params(single, {1.5}, {1.5}, 0.3);
  CHECK(fN_intertwine_check(single, sp, [](double x) { return x; }).pass);
  const Matrix a = annihilation(single, 0).dense();
  const Matrix n = total_number(sp, single).dense();
  const Matrix proj = interior_projector(single, 1).dense();
  CHECK(((a * n - n * a - 1.5 * a) * proj).cwiseAbs().maxCoeff() < 1e-14);

  // holds for any profile, including non-polynomial ones
  CHECK(fN_intertwine_check(single, sp, [](double x) { return std::sin(x); }).pass);
}

TEST_CASE("[H, N] vanishes on resonance, control does not") {
  const ModeLayout layout = make_layout(2, 1, {6, 6, 4});
  const ModelParams p = dpo(layout);
  const auto reps = HN_commute_check(p, layout);
  REQUIRE(reps.size() == 2);
  CHECK(reps[0].pass);
  CHECK(reps[0].worst <= 1e-12);
  CHECK(reps[1].pass);
  CHECK(reps[1].worst >= 0.1 * 0.2 / 2.0);
  CHECK(reps[1].tolerance == doctest::Approx(0.01));
}

TEST_CASE("hypothesis suite passes on the DPO model") {
  const ModeLayout layout = make_layout(2, 1, {6, 6, 4});
  const ModelParams p = dpo(layout);
  const auto reps = hypothesis_suite(p, layout, {200, 7, 1, 1e-10});
  for (const auto& r : reps) {
    INFO(r.name << " " << r.location << " " << r.worst);
    CHECK(r.pass);
  }
  CHECK(find(reps, "hyp6_K").checked == 200);
  CHECK(find(reps, "hyp7_N_equals_minus_R_adjoint").worst == 0.0);
}

TEST_CASE("hypothesis (7) locates a flipped N") {
  const ModeLayout layout = make_layout(2, 1, {4, 4, 3});
  const ModelParams p = dpo(layout);
  HPCoefficients hp = hp_coefficients(p, layout);
  hp.N[4] = hp.N[4].scaled(-1.0);
  const auto reps = hypothesis_suite(hp, p, layout, {20, 3, 1, 1e-10});
  const CheckReport& r = find(reps, "hyp7_N_equals_minus_R_adjoint");
  CHECK_FALSE(r.pass);
  CHECK(r.violations == 1);
  CHECK(r.location.find("channel 5") != std::string::npos);
  CHECK(r.location.find("block 3, entry 2") != std::string::npos);
  // (6*) only sees norms of N_k^*, so the flipped sign slips through there
  CHECK(find(reps, "hyp6_Kstar").pass);
}

TEST_CASE("Q/Z domination") {
  // single a-loss channel: Z = |alpha|^2 N_s, Q = |alpha|^2 N + 0
  const ModeLayout layout = make_layout(1, 1, {6, 6});
  ModelParams p = zero_params(layout, {1.0}, {1.0}, 0.4);
  p.alpha[4] = {0.7};
  const auto reps = hypothesis_suite(p, layout, {50, 1, 1, 1e-10});
  CHECK(find(reps, "QZ_domination").pass);

  // equal amplitudes on several blocks of one unit-frequency mode break it
  ModelParams q = zero_params(layout, {1.0}, {1.0}, 0.4);
  q.alpha[0] = {0.5};
  q.alpha[2] = {0.5};
  q.alpha[4] = {0.5};
  const CheckReport& bad = find(hypothesis_suite(q, layout, {10, 1, 1, 1e-10}), "QZ_domination");
  CHECK_FALSE(bad.pass);
  CHECK(bad.margin < 0.0);
}

TEST_CASE("default suite on a small DPO model") {
  const ModeLayout layout = make_layout(2, 1, {6, 6, 4});
  const ModelParams p = dpo(layout);
  VerifyOptions opt;
  opt.grid_step = 1e-2;
  const auto reps = default_suite(p, layout, opt);
  CHECK(reps.size() == 12);
  for (const auto& r : reps) {
    INFO(r.name);
    CHECK_FALSE(r.location.empty());
    if (r.name != "scriptL_bound") CHECK(r.pass);
  }
  CHECK_FALSE(all_pass(reps));
  // order is fixed
  CHECK(reps.front().name == "lemma_rk");
  CHECK(reps.back().name == "measurement_compatibility");
}
