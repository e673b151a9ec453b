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
#include <limits>
#include <sstream>

#include "doctest.h"
#include "mposim/fock.hpp"

using namespace mposim;

namespace {

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TEST_CASE("layout dimensions and validation") {
  CHECK(make_layout(1, 1, {2, 2}).dim() == 4);
  CHECK(make_layout(2, 1, {12, 12, 8}).dim() == 1152);
  CHECK_THROWS_AS(make_layout(1, 1, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(make_layout(0, 1, {2}), std::invalid_argument);
  CHECK_THROWS_AS(make_layout(1, 1, {3}), std::invalid_argument);
}

TEST_CASE("row-major indexing is a bijection") {
  const ModeLayout layout = make_layout(2, 1, {3, 3, 3});
  const std::array occ{2, 1, 0};
  CHECK(layout.index(occ) == 21);
  const ModeLayout big = make_layout(2, 2, {5, 4, 3, 6});
  for (std::size_t i = 0; i < big.dim(); ++i) {
    const auto o = big.occupations(i);
    REQUIRE(big.index(o) == i);
    for (int k = 0; k < big.n_modes(); ++k) CHECK(big.occupation(i, k) == o[static_cast<std::size_t>(k)]);
  }
  CHECK(layout.mode_name(0) == "a1");
  CHECK(layout.mode_name(2) == "b1");
}

TEST_CASE("single-mode ladder matrix elements") {
  // one mode per kind; mode 0 sits on the slow index, so a_1 acts on blocks of 2
  const ModeLayout layout = make_layout(1, 1, {3, 2});
  const OperatorMatrix a = annihilation(layout, 0);
  const OperatorMatrix ad = creation(layout, 0);
  const std::array e2{2, 0};
  const std::array e1{1, 0};
  const std::array e0{0, 0};
  CHECK(a.coeff(layout.index(e1), layout.index(e2)).real() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(ad.coeff(layout.index(e2), layout.index(e1)).real() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  // a e_0 = 0 and a† e_top = 0
  CHECK(a.apply(basis_state(layout, e0).vector()).norm() == 0.0);
  CHECK(ad.apply(basis_state(layout, e2).vector()).norm() == 0.0);

  const OperatorMatrix b = annihilation(layout, 1);
  const std::array p1{0, 1};
  CHECK(b.coeff(layout.index(e0), layout.index(p1)) == Complex(1.0, 0.0));
  CHECK_THROWS(annihilation(layout, 2));
  CHECK_THROWS(creation(layout, -1));
}

TEST_CASE("adjoint pairing, number consistency and cross-mode commutators") {
  const ModeLayout layout = make_layout(2, 2, {4, 3, 3, 2});
  for (int k = 0; k < layout.n_modes(); ++k) {
    const OperatorMatrix a = annihilation(layout, k);
    const OperatorMatrix ad = creation(layout, k);
    CHECK(max_abs(ad.dense() - a.dense().adjoint()) == 0.0);
    CHECK(max_abs(number(layout, k).dense() - (ad * a).dense()) <= 1e-12);
    for (int j = 0; j < layout.n_modes(); ++j) {
      if (j == k) continue;
      const OperatorMatrix b = annihilation(layout, j);
      const OperatorMatrix bd = creation(layout, j);
      CHECK(commutator(a, b).is_zero());
      CHECK(commutator(a, bd).is_zero());
      CHECK(commutator(ad, b).is_zero());
      CHECK(commutator(ad, bd).is_zero());
    }
  }
}

TEST_CASE("canonical commutation holds exactly behind the interior projector") {
  const ModeLayout layout = make_layout(2, 1, {4, 5, 3});
  const OperatorMatrix p = interior_projector(layout, 1);
  const OperatorMatrix id = OperatorMatrix::identity(layout.dim());
  for (int k = 0; k < layout.n_modes(); ++k) {
    const OperatorMatrix c = commutator(annihilation(layout, k), creation(layout, k));
    // sqrt(k+1)^2 - k rounds, so "exact" means a few ulps of the largest occupation
    CHECK(max_abs(((c - id) * p).dense()) <= 4.0 * std::numeric_limits<double>::epsilon() * layout.cutoff(k));
    // and fails on the edge without it
    CHECK(max_abs((c - id).dense()) > 0.5);
  }
  CHECK(commutator(id, id).is_zero());
}

TEST_CASE("interior projector and edge mask") {
  const ModeLayout one = make_layout(1, 1, {4, 2});
  const OperatorMatrix p = interior_projector(make_layout(1, 1, {4, 4}), 1);
  CHECK(p.nnz() == 9);
  const ModeLayout l = make_layout(1, 1, {4, 4});
  const OperatorMatrix p3 = interior_projector(l, 3);
  CHECK(p3.nnz() == 1);
  CHECK(p3.coeff(0, 0) == Complex(1.0, 0.0));
  CHECK(excluded_dimension(l, 1) == 16 - 9);
  CHECK_THROWS(interior_projector(one, 2));
  CHECK_THROWS(interior_projector(one, 0));
  const Eigen::VectorXd mask = edge_mask(l);
  CHECK(mask.sum() == doctest::Approx(7.0));
}

TEST_CASE("basis and coherent states") {
  const ModeLayout layout = make_layout(1, 1, {2, 2});
  const std::array vac{0, 0};
  const QuantumState v = basis_state(layout, vac);
  CHECK(v.vector()[0] == Complex(1.0, 0.0));
  const std::array bad{2, 0};
  CHECK_THROWS(basis_state(layout, bad));

  const ModeLayout big = make_layout(1, 1, {30, 2});
  const std::array<Complex, 2> amps{Complex(0.8, -0.3), Complex(0.0, 0.0)};
  const QuantumState c = coherent_state(big, amps);
  CHECK(c.norm() == doctest::Approx(1.0).epsilon(1e-14));
  const Complex mean = c.vector().dot(annihilation(big, 0).apply(c.vector()));
  CHECK(std::abs(mean - amps[0]) < 1e-12);
}

TEST_CASE("operator dump is sorted and stable") {
  const ModeLayout layout = make_layout(1, 1, {2, 2});
  const OperatorMatrix a = annihilation(layout, 0) + creation(layout, 1);
  const std::string text = a.dump();
  CHECK(text.rfind("dim 4\n", 0) == 0);
  CHECK(text == a.dump());
  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  std::size_t prev_row = 0, prev_col = 0, lines = 0;
  std::size_t row, col;
  double re, im;
  while (in >> row >> col >> re >> im) {
    if (lines) CHECK((row > prev_row || (row == prev_row && col > prev_col)));
    prev_row = row;
    prev_col = col;
    ++lines;
  }
  CHECK(lines == a.nnz());
}

TEST_CASE("algebra rejects mismatched dimensions") {
  const OperatorMatrix a = OperatorMatrix::identity(4);
  const OperatorMatrix b = OperatorMatrix::identity(6);
  CHECK_THROWS_AS(a + b, std::invalid_argument);
  CHECK_THROWS_AS(a * b, std::invalid_argument);
  CHECK_THROWS_AS(commutator(a, b), std::invalid_argument);
}
