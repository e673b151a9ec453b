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

#include <limits>
#include <vector>

#include "mposim/fock.hpp"
#include "mposim/model.hpp"

namespace mposim {

/// Coherent field amplitude entering one channel: f(t) = amplitude e^{-i frequency t}
/// on 0 <= t < horizon, zero elsewhere.
struct CoherentInput {
  Complex amplitude{0.0, 0.0};
  double frequency = 0.0;
  double horizon = std::numeric_limits<double>::infinity();

  bool active() const { return amplitude != Complex(0.0, 0.0); }
  Complex at(double t) const;
};

struct LindbladChannel {
  OperatorMatrix op;
  CoherentInput input;
};

/// Interaction-picture frame generated by a diagonal operator E:
/// rho_lab(t) = e^{-iEt} rho(t) e^{iEt}. An empty energy vector is the lab frame.
class Frame {
 public:
  Frame() = default;
  explicit Frame(Eigen::VectorXd energies) : energies_(std::move(energies)) {}

  bool is_lab() const { return energies_.size() == 0; }
  const Eigen::VectorXd& energies() const { return energies_; }

  Matrix to_lab(const Matrix& rho, double t) const;
  Vector to_lab(const Vector& psi, double t) const;
  Matrix from_lab(const Matrix& rho, double t) const;
  Vector from_lab(const Vector& psi, double t) const;
  /// e^{iEt} X e^{-iEt}: evaluating it on a frame state gives the lab expectation of X.
  OperatorMatrix observable_at(const OperatorMatrix& x, double t) const;

 private:
  Eigen::VectorXd energies_;
};

/// Lindblad generator with Hamiltonian H and channels L_k(t) = R_k + f_k(t) 1,
/// plus the Hamiltonian correction (i/2) sum_k (conj(f_k) R_k - f_k R_k†) of
/// coherent inputs. Channels that are scalar multiples of the same operator
/// share one dissipator term.
class Liouvillian {
 public:
  Liouvillian() = default;
  Liouvillian(OperatorMatrix hamiltonian, std::vector<LindbladChannel> channels, Frame frame = {});

  std::size_t dim() const { return hamiltonian_.dim(); }
  const OperatorMatrix& hamiltonian() const { return hamiltonian_; }
  const std::vector<LindbladChannel>& channels() const { return channels_; }
  const Frame& frame() const { return frame_; }
  bool time_dependent() const { return !driven_.empty(); }

  /// H + H_corr(t).
  OperatorMatrix hamiltonian_at(double t) const;
  /// R_k + f_k(t) 1.
  OperatorMatrix channel_at(std::size_t k, double t) const;
  /// -i(H + H_corr(t)) - 1/2 sum_k L_k(t)† L_k(t).
  OperatorMatrix drift_at(double t) const;

  /// d rho / dt for an arbitrary square matrix.
  Matrix apply(const Matrix& rho, double t) const;
  /// Same as apply, assuming rho is Hermitian; out must not alias rho.
  void apply_hermitian(const Matrix& rho, double t, Matrix& out) const;

 private:
  // Operator with at most one nonzero per row, (X v)_i = coeff_i v_{source_i};
  // ladder-type channels have this shape and skip the sparse product machinery.
  struct RowGather {
    std::vector<Eigen::Index> rows;  // rows holding an entry
    std::vector<Eigen::Index> source;
    std::vector<Complex> coeff;
    bool valid = false;
  };
  struct JumpGroup {
    OperatorMatrix op;
    double weight;
    RowGather gather;
  };

  static RowGather make_gather(const OperatorMatrix& op);
  OperatorMatrix::Storage drift_storage(double t) const;

  OperatorMatrix hamiltonian_;
  std::vector<LindbladChannel> channels_;
  Frame frame_;
  std::vector<JumpGroup> groups_;
  std::vector<std::size_t> driven_;
  OperatorMatrix::Storage static_drift_;  // -iH - 1/2 sum R†R
  // static drift as diagonal + row-gather layers (empty layers when it has no such split)
  Vector drift_diag_;
  std::vector<RowGather> drift_layers_;
  bool drift_split_ = false;
  Eigen::SparseMatrix<Complex> static_drift_col_;
  std::vector<RowGather> drive_r_;      // per driven channel: R_k
  std::vector<RowGather> drive_r_adj_;  // and R_k†
};

/// d rho / dt = -i[H(t), rho] + sum_k (L_k rho L_k† - 1/2 {L_k† L_k, rho}).
Matrix liouvillian_apply(const Liouvillian& generator, const QuantumState& rho, double t);

/// Tr(X rho) for mixed states, <psi|X psi> for pure states.
Complex expectation(const QuantumState& state, const OperatorMatrix& x);
Complex expectation(const Matrix& rho, const OperatorMatrix& x);
Complex expectation(const Vector& psi, const OperatorMatrix& x);

struct PropagateOptions {
  double dt = 1e-2;
  double leak_tol = 1e-6;
  double trace_tol = 1e-6;
  /// Per-basis-state weight of the truncation edge; empty disables the leak monitor.
  Eigen::VectorXd edge_mask;
  std::vector<OperatorMatrix> observables;
  bool keep_states = true;
  bool check_positivity = true;
  /// Dense eigensolve up to this dimension, Lanczos estimate above.
  std::size_t dense_eigen_max_dim = 2048;
  /// Compare the first step against two half steps (result.self_check_error).
  bool self_check = true;
};

struct PropagationResult {
  std::vector<double> times;
  std::vector<QuantumState> states;  // lab frame, empty unless keep_states
  std::vector<double> trace_err;
  std::vector<double> pos_err;  // min(0, smallest eigenvalue)
  std::vector<double> min_eigenvalue;
  std::vector<double> edge_leak;
  std::vector<std::vector<Complex>> observables;  // [observable][time]
  double max_step_trace_err = 0.0;
  double max_step_edge_leak = 0.0;
  /// Richardson estimate of the local error of the first step, max |entry|; NaN when off.
  double self_check_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t steps = 0;
};

/// Fixed-step RK4 integration of the master equation from t_grid.front().
///
/// Each grid interval is split into ceil(interval / dt) equal steps so that
/// snapshots land on the grid. Throws NumericalGuardError when the edge
/// population exceeds leak_tol or |Tr rho - 1| exceeds trace_tol.
PropagationResult propagate(const Liouvillian& generator, const QuantumState& rho0, const std::vector<double>& t_grid,
                            const PropagateOptions& opts);

/// Smallest eigenvalue of a Hermitian matrix: dense solve up to dense_max_dim, Lanczos above.
double smallest_eigenvalue(const Matrix& rho, std::size_t dense_max_dim = 2048);

enum class FrameKind { lab, rotating };

/// Master-equation generator of the model. The rotating frame removes N = N_s + N_p
/// exactly (requires sum ws == sum wp in floating point, otherwise the lab frame is used).
Liouvillian model_liouvillian(const ModelParams& params, const ModeLayout& layout,
                              FrameKind frame = FrameKind::rotating);

/// Lindblad channels of the model in the requested frame (pump inputs carry the coherent drive).
std::vector<LindbladChannel> model_channels(const ModelParams& params, const ModeLayout& layout, FrameKind frame);

/// True when the rotating frame is exact for these parameters.
bool rotating_frame_exact(const ModelParams& params);

}  // namespace mposim
