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

#include <array>
#include <cmath>

#include "doctest.h"
#include "mposim/model.hpp"

using namespace mposim;

namespace {

constexpr Complex kI(0.0, 1.0);

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

ModelParams dpo_small(const ModeLayout& layout) {
  ModelParams p = zero_params(layout, {1.0, 1.0}, {2.0}, 0.2);
  p.alpha[0] = {0.3, 0.3};
  p.alpha[1] = {0.3};
  p.alpha[2] = {Complex(0.0, 0.3), 0.3};
  p.alpha[3] = {0.6};
  p.alpha[4] = {0.2, 0.2};
  p.alpha[5] = {0.2};
  p.alpha[6] = {0.05, 0.0};
  p.alpha[7] = {0.1};
  return p;
}

}  // namespace

TEST_CASE("interaction term is anti-Hermitian and H is Hermitian") {
  const ModeLayout layout = make_layout(2, 1, {4, 4, 3});
  const ModelParams p = dpo_small(layout);
  const Matrix i_op = interaction(layout).dense();
  CHECK(max_abs(i_op + i_op.adjoint()) == 0.0);
  const Matrix h = hamiltonian(p, layout).dense();
  CHECK(max_abs(h - h.adjoint()) <= 1e-15);
  // <e|N e> = q(s,p)
  const std::array occ{2, 1, 1};
  const auto idx = static_cast<Eigen::Index>(layout.index(occ));
  CHECK(number_spectrum(p, layout)[idx] == doctest::Approx(2.0 * 1.0 + 1.0 * 1.0 + 2.0 * 1.0));
  // a1† a2† b1 sends |0,0,1> to |1,1,0>
  const std::array from{0, 0, 1};
  const std::array to{1, 1, 0};
  CHECK(interaction(layout).coeff(layout.index(to), layout.index(from)) == Complex(1.0, 0.0));
}

TEST_CASE("resonance and coupling validation") {
  const ModeLayout layout = make_layout(2, 1, {3, 3, 3});
  ModelParams p = dpo_small(layout);
  p.wp = {2.0 + 1e-6};
  CHECK_THROWS_WITH_AS(hamiltonian(p, layout), doctest::Contains("resonance"), std::invalid_argument);
  p.wp = {2.0 + 1e-10};
  CHECK_NOTHROW(hamiltonian(p, layout));
  p = dpo_small(layout);
  p.g = 0.0;
  CHECK_THROWS(validate(p, layout));
  p = dpo_small(layout);
  p.alpha[3] = {0.1, 0.2};
  CHECK_THROWS(validate(p, layout));
}

TEST_CASE("channel flattening follows the block layout") {
  const ModeLayout layout = make_layout(2, 1, {3, 3, 3});
  const ModelParams p = dpo_small(layout);
  const ChannelSet set = flatten_channels(p, layout);
  REQUIRE(set.size() == 12);
  CHECK(set[0].role == ChannelRole::photocount_sub);
  CHECK(set[2].role == ChannelRole::photocount_pump);
  CHECK(set[3].role == ChannelRole::homodyne);
  CHECK(set[5].role == ChannelRole::pump_input);
  CHECK(set[6].role == ChannelRole::loss_a);
  CHECK(set[8].role == ChannelRole::loss_b);
  CHECK(set[9].role == ChannelRole::thermal_a);
  CHECK(set[11].role == ChannelRole::thermal_b);
  CHECK(set[9].creation);
  CHECK(!set[8].creation);
  // complex-by-complex scaling may round differently from real scaling once FMA contraction kicks in
  CHECK(max_abs(set[3].op.dense() - (kI * 0.3) * annihilation(layout, 0).dense()) <= 1e-16);
  CHECK(max_abs(set[11].op.dense() - 0.1 * creation(layout, 2).dense()) <= 1e-16);
  for (std::size_t k = 0; k < set.size(); ++k) {
    const auto [block, local] = ChannelSet::block_position(k, 2, 1);
    CHECK(ChannelSet::flat_index(block, local, 2, 1) == k);
  }
  CHECK_THROWS(ChannelSet::block_position(12, 2, 1));
}

TEST_CASE("K is -iH - R/2 and the HP coefficients satisfy N = -R†") {
  const ModeLayout layout = make_layout(2, 1, {3, 3, 3});
  const ModelParams p = dpo_small(layout);
  const Matrix k = effective_K(p, layout).dense();
  const Matrix h = hamiltonian(p, layout).dense();
  Matrix r = Matrix::Zero(k.rows(), k.cols());
  for (const auto& ch : flatten_channels(p, layout)) r += ch.op.dense().adjoint() * ch.op.dense();
  CHECK(max_abs(k - (-kI * h - 0.5 * r)) <= 1e-14);
  const HPCoefficients hp = hp_coefficients(p, layout);
  CHECK(max_abs(hp.S - Matrix::Identity(12, 12)) == 0.0);
  for (std::size_t j = 0; j < hp.R.size(); ++j) CHECK(max_abs(hp.N[j].dense() + hp.R[j].dense().adjoint()) == 0.0);
}

TEST_CASE("drive shift: amplitude, shifted channel and correction Hamiltonian") {
  const ModeLayout layout = make_layout(1, 1, {3, 3});
  ModelParams p = zero_params(layout, {1.5}, {1.5}, 0.1);
  p.alpha[3] = {Complex(0.4, 0.3)};
  p.drive.lambda = Complex(0.2, -0.1);
  p.drive.horizon = 5.0;
  const ChannelSet set = flatten_channels(p, layout);
  const double t = 0.7;
  const DriveShift shift = drive_shift(p, set, t);
  const Complex f = kI * p.drive.lambda * std::exp(-kI * 1.5 * t) / std::conj(p.alpha[3][0]);
  CHECK(std::abs(shift.amplitudes[3] - f) < 1e-15);
  const Matrix r = set[3].op.dense();
  const Matrix id = Matrix::Identity(r.rows(), r.cols());
  CHECK(max_abs(shift.channels[3].dense() - (r + f * id)) <= 1e-15);
  const Matrix hc = shift.h_corr.dense();
  CHECK(max_abs(hc - hc.adjoint()) <= 1e-15);
  CHECK(max_abs(hc - 0.5 * kI * (std::conj(f) * r - f * r.adjoint())) <= 1e-15);
  // the correction is lambda-linear in b: (i/2)(conj f R - f R†) = (lambda_bar b + lambda b†)/2 e^{...}
  const Matrix b = annihilation(layout, 1).dense();
  const Complex lam = p.drive.lambda * std::exp(-kI * 1.5 * t);
  CHECK(max_abs(hc - 0.5 * (std::conj(lam) * b + lam * b.adjoint())) <= 1e-15);
  // off after the horizon and for the other channels
  CHECK(drive_shift(p, set, 5.0).amplitudes[3] == Complex(0.0, 0.0));
  CHECK(shift.amplitudes[0] == Complex(0.0, 0.0));
  // lambda without a pump-input amplitude is rejected
  p.alpha[3] = {0.0};
  CHECK_THROWS(drive_shift(p, flatten_channels(p, layout), 0.0));
}

TEST_CASE("default measurement scheme is compatible; overlapping detectors are not") {
  const ModeLayout layout = make_layout(2, 1, {3, 3, 3});
  const ModelParams p = dpo_small(layout);
  CHECK(measurement_compatibility_check(p, layout).pass);
  DetectorAssignment clash = default_detectors(layout);
  clash.homodyne.push_back(0);  // a counter already sits on channel 1
  const MeasurementScheme scheme = make_scheme(p, layout, clash);
  const std::array times{0.0, 0.5};
  const CompatibilityReport report = measurement_compatibility_check(scheme, times);
  CHECK(!report.pass);
  CHECK(report.violation == "B_i h_j");
}
