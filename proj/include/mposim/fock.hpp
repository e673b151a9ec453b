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

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace mposim {

using Complex = std::complex<double>;
using Vector = Eigen::VectorXcd;
using Matrix = Eigen::MatrixXcd;

/// Mode bookkeeping for n subharmonic (a-type) and m pump (b-type) modes.
///
/// Modes are indexed from 0: modes 0..n-1 are subharmonic, n..n+m-1 are pump.
/// Mode k holds occupations 0..cutoff(k)-1. Basis states are indexed row-major
/// over the mode list, so the last pump mode varies fastest.
class ModeLayout {
 public:
  ModeLayout() = default;

  int n_sub() const { return n_; }
  int n_pump() const { return m_; }
  int n_modes() const { return n_ + m_; }
  std::size_t dim() const { return dim_; }

  int cutoff(int mode) const { return trunc_.at(static_cast<std::size_t>(mode)); }
  const std::vector<int>& cutoffs() const { return trunc_; }

  bool is_pump(int mode) const { return mode >= n_; }
  int sub_mode(int i) const { return i; }
  int pump_mode(int j) const { return n_ + j; }

  /// "a1".."an" for subharmonic modes, "b1".."bm" for pump modes.
  std::string mode_name(int mode) const;

  std::size_t index(std::span<const int> occupations) const;
  std::vector<int> occupations(std::size_t index) const;
  int occupation(std::size_t index, int mode) const {
    return static_cast<int>((index / stride_[static_cast<std::size_t>(mode)]) %
                            static_cast<std::size_t>(trunc_[static_cast<std::size_t>(mode)]));
  }

  void check_mode(int mode) const;

  friend bool operator==(const ModeLayout&, const ModeLayout&) = default;

 private:
  friend ModeLayout make_layout(int n, int m, std::vector<int> trunc);

  int n_ = 0;
  int m_ = 0;
  std::vector<int> trunc_;
  std::vector<std::size_t> stride_;
  std::size_t dim_ = 0;
};

/// Throws std::invalid_argument unless n, m >= 1 and every cutoff >= 2.
ModeLayout make_layout(int n, int m, std::vector<int> trunc);

/// Immutable sparse complex matrix on the truncated space.
///
/// Storage never holds explicit zeros and entries are kept in (row, col)
/// order, so dumps are byte-stable.
class OperatorMatrix {
 public:
  using Storage = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;

  struct Entry {
    std::size_t row;
    std::size_t col;
    Complex value;
  };

  OperatorMatrix() = default;
  explicit OperatorMatrix(Storage matrix);

  static OperatorMatrix from_entries(std::size_t dim, const std::vector<Entry>& entries);
  static OperatorMatrix identity(std::size_t dim);
  static OperatorMatrix zero(std::size_t dim);
  static OperatorMatrix diagonal(const Eigen::VectorXd& values);
  static OperatorMatrix diagonal(const Vector& values);
  static OperatorMatrix from_dense(const Matrix& dense);

  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  std::size_t nnz() const { return static_cast<std::size_t>(m_.nonZeros()); }
  bool is_zero() const { return m_.nonZeros() == 0; }

  Complex coeff(std::size_t row, std::size_t col) const;
  const Storage& sparse() const { return m_; }
  Matrix dense() const { return Matrix(m_); }
  std::vector<Entry> entries() const;

  /// Largest |entry|, 0 for the zero operator.
  double max_abs() const;

  OperatorMatrix adjoint() const;
  OperatorMatrix scaled(Complex factor) const;

  Vector apply(const Vector& v) const;

  /// Text dump: header "dim D" then one "row col re im" line per entry.
  void dump(std::ostream& out) const;
  std::string dump() const;

  friend OperatorMatrix operator+(const OperatorMatrix& a, const OperatorMatrix& b);
  friend OperatorMatrix operator-(const OperatorMatrix& a, const OperatorMatrix& b);
  friend OperatorMatrix operator*(const OperatorMatrix& a, const OperatorMatrix& b);
  friend OperatorMatrix operator*(Complex factor, const OperatorMatrix& a) { return a.scaled(factor); }
  friend Vector operator*(const OperatorMatrix& a, const Vector& v) { return a.apply(v); }

 private:
  Storage m_;
};

OperatorMatrix annihilation(const ModeLayout& layout, int mode);
OperatorMatrix creation(const ModeLayout& layout, int mode);
OperatorMatrix number(const ModeLayout& layout, int mode);

/// AB - BA with exact cancellations removed. Throws on dimension mismatch.
OperatorMatrix commutator(const OperatorMatrix& a, const OperatorMatrix& b);

/// Diagonal 0/1 projector onto basis states whose every occupation is at most
/// cutoff-1-margin. Requires 1 <= margin < min cutoff.
OperatorMatrix interior_projector(const ModeLayout& layout, int margin);

/// Number of basis states removed by interior_projector(layout, margin).
std::size_t excluded_dimension(const ModeLayout& layout, int margin);

/// 1 on basis states with some occupation at its top shell (cutoff-1), else 0.
Eigen::VectorXd edge_mask(const ModeLayout& layout);

/// Pure state vector or density matrix on the truncated space.
class QuantumState {
 public:
  enum class Kind { pure, mixed };

  /// Empty placeholder (dim 0); assign a real state before use.
  QuantumState() = default;

  static QuantumState pure(Vector psi);
  static QuantumState mixed(Matrix rho);

  Kind kind() const { return kind_; }
  bool is_pure() const { return kind_ == Kind::pure; }
  std::size_t dim() const;

  const Vector& vector() const;
  const Matrix& density() const;

  /// |psi><psi| for pure states, a copy otherwise.
  QuantumState to_mixed() const;

  double norm() const;
  Complex trace() const;
  double hermiticity_error() const;
  /// Smallest eigenvalue of the density matrix (dense solve).
  double min_eigenvalue() const;
  /// Total population on truncation-edge shells.
  double edge_population(const Eigen::VectorXd& mask) const;

 private:
  QuantumState(Kind kind, Vector psi, Matrix rho)
      : kind_(kind), psi_(std::move(psi)), rho_(std::move(rho)) {}

  Kind kind_ = Kind::pure;
  Vector psi_;
  Matrix rho_;
};

QuantumState basis_state(const ModeLayout& layout, std::span<const int> occupations);

/// Normalized product of per-mode coherent states, each cut at its cutoff.
QuantumState coherent_state(const ModeLayout& layout, std::span<const Complex> amplitudes);

}  // namespace mposim
