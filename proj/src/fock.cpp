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

#include "mposim/fock.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mposim {

namespace {

OperatorMatrix::Storage prune_zeros(OperatorMatrix::Storage m) {
  m.prune([](const Eigen::Index&, const Eigen::Index&, const Complex& v) { return v != Complex(0.0); });
  m.makeCompressed();
  return m;
}

void check_same_dim(const OperatorMatrix& a, const OperatorMatrix& b, const char* op) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch (" + std::to_string(a.dim()) +
                                " vs " + std::to_string(b.dim()) + ")");
  }
}

// Single-mode ladder operator lifted to the full space. `raise` selects a†.
OperatorMatrix ladder(const ModeLayout& layout, int mode, bool raise) {
  layout.check_mode(mode);
  const std::size_t dim = layout.dim();
  const int cutoff = layout.cutoff(mode);
  std::vector<OperatorMatrix::Entry> entries;
  entries.reserve(dim);
  std::vector<int> occ;
  for (std::size_t col = 0; col < dim; ++col) {
    occ = layout.occupations(col);
    const int k = occ[static_cast<std::size_t>(mode)];
    if (raise) {
      if (k + 1 >= cutoff) continue;  // hard cutoff: top shell is annihilated
      occ[static_cast<std::size_t>(mode)] = k + 1;
      entries.push_back({layout.index(occ), col, Complex(std::sqrt(static_cast<double>(k + 1)), 0.0)});
    } else {
      if (k == 0) continue;
      occ[static_cast<std::size_t>(mode)] = k - 1;
      entries.push_back({layout.index(occ), col, Complex(std::sqrt(static_cast<double>(k)), 0.0)});
    }
  }
  return OperatorMatrix::from_entries(dim, entries);
}

}  // namespace

// ---------------------------------------------------------------------------
// ModeLayout

ModeLayout make_layout(int n, int m, std::vector<int> trunc) {
  if (n < 1 || m < 1) {
    throw std::invalid_argument("make_layout: need at least one subharmonic and one pump mode");
  }
  if (trunc.size() != static_cast<std::size_t>(n + m)) {
    throw std::invalid_argument("make_layout: expected " + std::to_string(n + m) + " cutoffs, got " +
                                std::to_string(trunc.size()));
  }
  for (std::size_t k = 0; k < trunc.size(); ++k) {
    if (trunc[k] < 2) {
      throw std::invalid_argument("make_layout: cutoff of mode " + std::to_string(k) +
                                  " is below 2, the mode cannot hold a photon");
    }
  }
  ModeLayout layout;
  layout.n_ = n;
  layout.m_ = m;
  layout.trunc_ = std::move(trunc);
  layout.stride_.assign(layout.trunc_.size(), 1);
  std::size_t dim = 1;
  for (std::size_t k = layout.trunc_.size(); k-- > 0;) {
    layout.stride_[k] = dim;
    dim *= static_cast<std::size_t>(layout.trunc_[k]);
  }
  layout.dim_ = dim;
  return layout;
}

std::string ModeLayout::mode_name(int mode) const {
  check_mode(mode);
  return is_pump(mode) ? "b" + std::to_string(mode - n_ + 1) : "a" + std::to_string(mode + 1);
}

void ModeLayout::check_mode(int mode) const {
  if (mode < 0 || mode >= n_modes()) {
    throw std::out_of_range("mode " + std::to_string(mode) + " out of range [0, " + std::to_string(n_modes()) +
                            ")");
  }
}

std::size_t ModeLayout::index(std::span<const int> occupations) const {
  if (occupations.size() != trunc_.size()) {
    throw std::invalid_argument("occupation tuple has " + std::to_string(occupations.size()) +
                                " entries, layout has " + std::to_string(trunc_.size()) + " modes");
  }
  std::size_t idx = 0;
  for (std::size_t k = 0; k < trunc_.size(); ++k) {
    if (occupations[k] < 0 || occupations[k] >= trunc_[k]) {
      throw std::out_of_range("occupation " + std::to_string(occupations[k]) + " of mode " + std::to_string(k) +
                              " outside [0, " + std::to_string(trunc_[k]) + ")");
    }
    idx += static_cast<std::size_t>(occupations[k]) * stride_[k];
  }
  return idx;
}

std::vector<int> ModeLayout::occupations(std::size_t index) const {
  if (index >= dim_) throw std::out_of_range("basis index " + std::to_string(index) + " out of range");
  std::vector<int> occ(trunc_.size());
  for (std::size_t k = 0; k < trunc_.size(); ++k) {
    occ[k] = static_cast<int>((index / stride_[k]) % static_cast<std::size_t>(trunc_[k]));
  }
  return occ;
}

// ---------------------------------------------------------------------------
// OperatorMatrix

OperatorMatrix::OperatorMatrix(Storage matrix) : m_(prune_zeros(std::move(matrix))) {
  if (m_.rows() != m_.cols()) throw std::invalid_argument("OperatorMatrix must be square");
}

OperatorMatrix OperatorMatrix::from_entries(std::size_t dim, const std::vector<Entry>& entries) {
  std::vector<Eigen::Triplet<Complex>> triplets;
  triplets.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.row >= dim || e.col >= dim) throw std::out_of_range("operator entry outside dimension");
    triplets.emplace_back(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col), e.value);
  }
  Storage m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  m.setFromTriplets(triplets.begin(), triplets.end());
  return OperatorMatrix(std::move(m));
}

OperatorMatrix OperatorMatrix::identity(std::size_t dim) {
  Storage m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  m.setIdentity();
  return OperatorMatrix(std::move(m));
}

OperatorMatrix OperatorMatrix::zero(std::size_t dim) {
  return OperatorMatrix(Storage(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)));
}

OperatorMatrix OperatorMatrix::diagonal(const Eigen::VectorXd& values) {
  return diagonal(Vector(values.cast<Complex>()));
}

OperatorMatrix OperatorMatrix::diagonal(const Vector& values) {
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    entries.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(i), values[i]});
  }
  return from_entries(static_cast<std::size_t>(values.size()), entries);
}

OperatorMatrix OperatorMatrix::from_dense(const Matrix& dense) {
  if (dense.rows() != dense.cols()) throw std::invalid_argument("from_dense: matrix must be square");
  return OperatorMatrix(Storage(dense.sparseView(Complex(0.0), 0.0)));
}

Complex OperatorMatrix::coeff(std::size_t row, std::size_t col) const {
  if (row >= dim() || col >= dim()) throw std::out_of_range("coeff index out of range");
  return m_.coeff(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
}

std::vector<OperatorMatrix::Entry> OperatorMatrix::entries() const {
  std::vector<Entry> out;
  out.reserve(nnz());
  for (Eigen::Index r = 0; r < m_.outerSize(); ++r) {
    for (Storage::InnerIterator it(m_, r); it; ++it) {
      out.push_back({static_cast<std::size_t>(it.row()), static_cast<std::size_t>(it.col()), it.value()});
    }
  }
  return out;
}

double OperatorMatrix::max_abs() const {
  double best = 0.0;
  const Complex* values = m_.valuePtr();
  for (Eigen::Index i = 0; i < m_.nonZeros(); ++i) best = std::max(best, std::abs(values[i]));
  return best;
}

OperatorMatrix OperatorMatrix::adjoint() const { return OperatorMatrix(Storage(m_.adjoint())); }

OperatorMatrix OperatorMatrix::scaled(Complex factor) const { return OperatorMatrix(Storage(factor * m_)); }

Vector OperatorMatrix::apply(const Vector& v) const {
  if (static_cast<std::size_t>(v.size()) != dim()) throw std::invalid_argument("apply: dimension mismatch");
  return m_ * v;
}

void OperatorMatrix::dump(std::ostream& out) const {
  out << "dim " << dim() << '\n';
  char line[128];
  for (const auto& e : entries()) {
    std::snprintf(line, sizeof line, "%zu %zu %.17g %.17g\n", e.row, e.col, e.value.real(), e.value.imag());
    out << line;
  }
}

std::string OperatorMatrix::dump() const {
  std::ostringstream out;
  dump(out);
  return out.str();
}

OperatorMatrix operator+(const OperatorMatrix& a, const OperatorMatrix& b) {
  check_same_dim(a, b, "operator+");
  return OperatorMatrix(OperatorMatrix::Storage(a.m_ + b.m_));
}

OperatorMatrix operator-(const OperatorMatrix& a, const OperatorMatrix& b) {
  check_same_dim(a, b, "operator-");
  return OperatorMatrix(OperatorMatrix::Storage(a.m_ - b.m_));
}

OperatorMatrix operator*(const OperatorMatrix& a, const OperatorMatrix& b) {
  check_same_dim(a, b, "operator*");
  return OperatorMatrix(OperatorMatrix::Storage(a.m_ * b.m_));
}

OperatorMatrix commutator(const OperatorMatrix& a, const OperatorMatrix& b) {
  check_same_dim(a, b, "commutator");
  return a * b - b * a;
}

OperatorMatrix annihilation(const ModeLayout& layout, int mode) { return ladder(layout, mode, false); }

OperatorMatrix creation(const ModeLayout& layout, int mode) { return ladder(layout, mode, true); }

OperatorMatrix number(const ModeLayout& layout, int mode) {
  layout.check_mode(mode);
  Eigen::VectorXd diag(static_cast<Eigen::Index>(layout.dim()));
  for (std::size_t i = 0; i < layout.dim(); ++i) {
    diag[static_cast<Eigen::Index>(i)] = layout.occupation(i, mode);
  }
  return OperatorMatrix::diagonal(diag);
}

OperatorMatrix interior_projector(const ModeLayout& layout, int margin) {
  const int min_cutoff = *std::min_element(layout.cutoffs().begin(), layout.cutoffs().end());
  if (margin < 1 || margin >= min_cutoff) {
    throw std::invalid_argument("interior_projector: margin " + std::to_string(margin) + " must lie in [1, " +
                                std::to_string(min_cutoff - 1) + "]");
  }
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.dim()));
  for (std::size_t i = 0; i < layout.dim(); ++i) {
    bool inside = true;
    for (int k = 0; k < layout.n_modes() && inside; ++k) {
      inside = layout.occupation(i, k) <= layout.cutoff(k) - 1 - margin;
    }
    if (inside) diag[static_cast<Eigen::Index>(i)] = 1.0;
  }
  return OperatorMatrix::diagonal(diag);
}

std::size_t excluded_dimension(const ModeLayout& layout, int margin) {
  return layout.dim() - interior_projector(layout, margin).nnz();
}

Eigen::VectorXd edge_mask(const ModeLayout& layout) {
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.dim()));
  for (std::size_t i = 0; i < layout.dim(); ++i) {
    for (int k = 0; k < layout.n_modes(); ++k) {
      if (layout.occupation(i, k) == layout.cutoff(k) - 1) {
        mask[static_cast<Eigen::Index>(i)] = 1.0;
        break;
      }
    }
  }
  return mask;
}

// ---------------------------------------------------------------------------
// QuantumState

QuantumState QuantumState::pure(Vector psi) { return QuantumState(Kind::pure, std::move(psi), Matrix()); }

QuantumState QuantumState::mixed(Matrix rho) {
  if (rho.rows() != rho.cols()) throw std::invalid_argument("density matrix must be square");
  return QuantumState(Kind::mixed, Vector(), std::move(rho));
}

std::size_t QuantumState::dim() const {
  return static_cast<std::size_t>(is_pure() ? psi_.size() : rho_.rows());
}

const Vector& QuantumState::vector() const {
  if (!is_pure()) throw std::logic_error("vector() on a mixed state");
  return psi_;
}

const Matrix& QuantumState::density() const {
  if (is_pure()) throw std::logic_error("density() on a pure state");
  return rho_;
}

QuantumState QuantumState::to_mixed() const {
  if (!is_pure()) return *this;
  return mixed(psi_ * psi_.adjoint());
}

double QuantumState::norm() const { return is_pure() ? psi_.norm() : std::sqrt(std::abs(rho_.trace())); }

Complex QuantumState::trace() const { return is_pure() ? Complex(psi_.squaredNorm(), 0.0) : rho_.trace(); }

double QuantumState::hermiticity_error() const {
  if (is_pure()) return 0.0;
  return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff();
}

double QuantumState::min_eigenvalue() const {
  if (is_pure()) return 0.0;
  const Matrix herm = 0.5 * (rho_ + rho_.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(herm, Eigen::EigenvaluesOnly);
  return solver.eigenvalues()[0];
}

double QuantumState::edge_population(const Eigen::VectorXd& mask) const {
  if (static_cast<std::size_t>(mask.size()) != dim()) throw std::invalid_argument("edge mask dimension mismatch");
  if (is_pure()) return (psi_.cwiseAbs2().array() * mask.array()).sum();
  return (rho_.diagonal().real().array() * mask.array()).sum();
}

QuantumState basis_state(const ModeLayout& layout, std::span<const int> occupations) {
  Vector psi = Vector::Zero(static_cast<Eigen::Index>(layout.dim()));
  psi[static_cast<Eigen::Index>(layout.index(occupations))] = 1.0;
  return QuantumState::pure(std::move(psi));
}

QuantumState coherent_state(const ModeLayout& layout, std::span<const Complex> amplitudes) {
  if (amplitudes.size() != static_cast<std::size_t>(layout.n_modes())) {
    throw std::invalid_argument("coherent_state: one amplitude per mode required");
  }
  std::vector<std::vector<Complex>> factors(amplitudes.size());
  for (std::size_t k = 0; k < amplitudes.size(); ++k) {
    const int d = layout.cutoff(static_cast<int>(k));
    factors[k].resize(static_cast<std::size_t>(d));
    Complex term(1.0, 0.0);  // alpha^j / sqrt(j!)
    for (int j = 0; j < d; ++j) {
      factors[k][static_cast<std::size_t>(j)] = term;
      term *= amplitudes[k] / std::sqrt(static_cast<double>(j + 1));
    }
  }
  Vector psi(static_cast<Eigen::Index>(layout.dim()));
  for (std::size_t i = 0; i < layout.dim(); ++i) {
    Complex amp(1.0, 0.0);
    for (int k = 0; k < layout.n_modes(); ++k) {
      amp *= factors[static_cast<std::size_t>(k)][static_cast<std::size_t>(layout.occupation(i, k))];
    }
    psi[static_cast<Eigen::Index>(i)] = amp;
  }
  psi.normalize();
  return QuantumState::pure(std::move(psi));
}

}  // namespace mposim
