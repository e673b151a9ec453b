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

#include "mposim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mposim/errors.hpp"

namespace mposim {

namespace {

constexpr Complex kI(0.0, 1.0);

using Storage = OperatorMatrix::Storage;

// op / (its first stored value), together with that value.
std::pair<OperatorMatrix, Complex> normalize_first(const OperatorMatrix& op) {
  const Complex first = op.sparse().valuePtr()[0];
  return {op.scaled(1.0 / first), first};
}

bool same_operator(const OperatorMatrix& a, const OperatorMatrix& b) {
  if (a.dim() != b.dim() || a.nnz() != b.nnz()) return false;
  const auto ea = a.entries();
  const auto eb = b.entries();
  for (std::size_t i = 0; i < ea.size(); ++i) {
    if (ea[i].row != eb[i].row || ea[i].col != eb[i].col) return false;
    if (std::abs(ea[i].value - eb[i].value) > 1e-14 * (1.0 + std::abs(ea[i].value))) return false;
  }
  return true;
}

Eigen::VectorXcd frame_phases(const Eigen::VectorXd& energies, double t, double sign) {
  Eigen::VectorXcd p(energies.size());
  for (Eigen::Index i = 0; i < energies.size(); ++i) p[i] = std::exp(Complex(0.0, sign * energies[i] * t));
  return p;
}

double lanczos_smallest(const Matrix& a) {
  const Eigen::Index n = a.rows();
  const Eigen::Index steps = std::min<Eigen::Index>(n, 300);
  Matrix basis(n, steps);
  Eigen::VectorXd alpha(steps);
  Eigen::VectorXd beta(steps);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = Complex(1.0 + 0.5 * std::sin(0.7 * static_cast<double>(i)), 0.0);
  v.normalize();
  Eigen::Index used = 0;
  for (Eigen::Index j = 0; j < steps; ++j) {
    basis.col(j) = v;
    Vector w = a * v;
    alpha[j] = v.dot(w).real();
    // full reorthogonalization keeps Ritz values clean near clustered spectra
    for (int pass = 0; pass < 2; ++pass) {
      w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).adjoint() * w);
    }
    used = j + 1;
    const double b = w.norm();
    if (b < 1e-14 || j + 1 == steps) break;
    beta[j] = b;
    v = w / b;
  }
  Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(used, used);
  for (Eigen::Index j = 0; j < used; ++j) {
    tri(j, j) = alpha[j];
    if (j + 1 < used) tri(j, j + 1) = tri(j + 1, j) = beta[j];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(tri, Eigen::EigenvaluesOnly);
  return solver.eigenvalues()[0];
}

}  // namespace

Complex CoherentInput::at(double t) const {
  if (!active() || t < 0.0 || t >= horizon) return {0.0, 0.0};
  return amplitude * std::exp(-kI * (frequency * t));
}

// ---------------------------------------------------------------------------
// Frame

Matrix Frame::to_lab(const Matrix& rho, double t) const {
  if (is_lab()) return rho;
  const Eigen::VectorXcd p = frame_phases(energies_, t, -1.0);
  return p.asDiagonal() * rho * p.conjugate().asDiagonal();
}

Vector Frame::to_lab(const Vector& psi, double t) const {
  if (is_lab()) return psi;
  return frame_phases(energies_, t, -1.0).cwiseProduct(psi);
}

Matrix Frame::from_lab(const Matrix& rho, double t) const {
  if (is_lab()) return rho;
  const Eigen::VectorXcd p = frame_phases(energies_, t, 1.0);
  return p.asDiagonal() * rho * p.conjugate().asDiagonal();
}

Vector Frame::from_lab(const Vector& psi, double t) const {
  if (is_lab()) return psi;
  return frame_phases(energies_, t, 1.0).cwiseProduct(psi);
}

OperatorMatrix Frame::observable_at(const OperatorMatrix& x, double t) const {
  if (is_lab() || t == 0.0) return x;
  std::vector<OperatorMatrix::Entry> entries = x.entries();
  for (auto& e : entries) {
    const double de = energies_[static_cast<Eigen::Index>(e.row)] - energies_[static_cast<Eigen::Index>(e.col)];
    e.value *= std::exp(Complex(0.0, de * t));
  }
  return OperatorMatrix::from_entries(x.dim(), entries);
}

// ---------------------------------------------------------------------------
// Liouvillian

Liouvillian::Liouvillian(OperatorMatrix hamiltonian, std::vector<LindbladChannel> channels, Frame frame)
    : hamiltonian_(std::move(hamiltonian)), channels_(std::move(channels)), frame_(std::move(frame)) {
  const std::size_t dim = hamiltonian_.dim();
  if (!frame_.is_lab() && static_cast<std::size_t>(frame_.energies().size()) != dim) {
    throw std::invalid_argument("Liouvillian: frame dimension mismatch");
  }
  OperatorMatrix r_sum = OperatorMatrix::zero(dim);
  for (std::size_t k = 0; k < channels_.size(); ++k) {
    const OperatorMatrix& op = channels_[k].op;
    if (op.dim() != dim) throw std::invalid_argument("Liouvillian: channel dimension mismatch");
    if (channels_[k].input.active()) driven_.push_back(k);
    if (op.is_zero()) continue;
    r_sum = r_sum + op.adjoint() * op;
    auto [unit, scale] = normalize_first(op);
    auto it = std::find_if(groups_.begin(), groups_.end(), [&](const JumpGroup& g) { return same_operator(g.op, unit); });
    if (it == groups_.end()) {
      RowGather gather = make_gather(unit);
      groups_.push_back({std::move(unit), std::norm(scale), std::move(gather)});
    } else {
      it->weight += std::norm(scale);
    }
  }
  static_drift_ = (hamiltonian_.scaled(-kI) - r_sum.scaled(0.5)).sparse();
  static_drift_col_ = static_drift_;
  // Off-diagonal entries of row r go to layers 0, 1, ... in column order, so every
  // layer has at most one entry per row.
  drift_diag_ = Vector::Zero(static_cast<Eigen::Index>(dim));
  for (Eigen::Index r = 0; r < static_drift_.outerSize(); ++r) {
    std::size_t layer = 0;
    for (Storage::InnerIterator it(static_drift_, r); it; ++it) {
      if (it.col() == r) {
        drift_diag_[r] = it.value();
        continue;
      }
      if (layer == drift_layers_.size()) drift_layers_.emplace_back().valid = true;
      auto& g = drift_layers_[layer++];
      g.rows.push_back(r);
      g.source.push_back(it.col());
      g.coeff.push_back(it.value());
    }
  }
  drift_split_ = drift_layers_.size() <= 8;
  for (std::size_t k : driven_) {
    drive_r_.push_back(make_gather(channels_[k].op));
    drive_r_adj_.push_back(make_gather(channels_[k].op.adjoint()));
  }
}

Liouvillian::RowGather Liouvillian::make_gather(const OperatorMatrix& op) {
  RowGather g;
  const Storage& s = op.sparse();
  for (Eigen::Index r = 0; r < s.outerSize(); ++r) {
    const Eigen::Index count = s.outerIndexPtr()[r + 1] - s.outerIndexPtr()[r];
    if (count > 1) return {};
    if (count == 1) {
      Storage::InnerIterator it(s, r);
      g.rows.push_back(r);
      g.source.push_back(it.col());
      g.coeff.push_back(it.value());
    }
  }
  g.valid = true;
  return g;
}

OperatorMatrix Liouvillian::hamiltonian_at(double t) const {
  OperatorMatrix h = hamiltonian_;
  for (std::size_t k : driven_) {
    const Complex f = channels_[k].input.at(t);
    if (f == Complex(0.0, 0.0)) continue;
    const OperatorMatrix& r = channels_[k].op;
    h = h + (r.scaled(std::conj(f)) - r.adjoint().scaled(f)).scaled(kI * 0.5);
  }
  return h;
}

OperatorMatrix Liouvillian::channel_at(std::size_t k, double t) const {
  const LindbladChannel& ch = channels_.at(k);
  const Complex f = ch.input.at(t);
  if (f == Complex(0.0, 0.0)) return ch.op;
  return ch.op + OperatorMatrix::identity(dim()).scaled(f);
}

OperatorMatrix Liouvillian::drift_at(double t) const {
  // With L = R + f and the correction Hamiltonian, -iH_corr - 1/2(L†L - R†R) = -f R† - |f|^2/2.
  Storage k = static_drift_;
  for (std::size_t idx : driven_) {
    const Complex f = channels_[idx].input.at(t);
    if (f == Complex(0.0, 0.0)) continue;
    Storage shift = channels_[idx].op.adjoint().sparse() * (-f);
    k += shift;
    Storage id(k.rows(), k.cols());
    id.setIdentity();
    k += id * Complex(-0.5 * std::norm(f), 0.0);
  }
  return OperatorMatrix(std::move(k));
}

Storage Liouvillian::drift_storage(double t) const {
  // Master-equation form: the coherent input enters as the commutator [conj(f) R - f R†, rho].
  Storage k = static_drift_;
  for (std::size_t idx : driven_) {
    const Complex f = channels_[idx].input.at(t);
    if (f == Complex(0.0, 0.0)) continue;
    const Storage& r = channels_[idx].op.sparse();
    Storage extra = r * std::conj(f) - Storage(r.adjoint()) * f;
    k += extra;
  }
  return k;
}

namespace {

// out += scale * X rho for a row-gather X.
template <class Gather>
void gather_left(const Gather& g, Complex scale, const Matrix& rho, Matrix& out) {
  const auto n = g.rows.size();
  for (Eigen::Index j = 0; j < rho.cols(); ++j) {
    const Complex* src = rho.col(j).data();
    Complex* dst = out.col(j).data();
    for (std::size_t q = 0; q < n; ++q) dst[g.rows[q]] += (scale * g.coeff[q]) * src[g.source[q]];
  }
}

// out += w X rho X† for a row-gather X.
template <class Gather>
void gather_sandwich(const Gather& g, double w, const Matrix& rho, Matrix& out) {
  const auto n = g.rows.size();
  for (std::size_t p = 0; p < n; ++p) {
    const Complex cj = w * std::conj(g.coeff[p]);
    const Complex* src = rho.col(g.source[p]).data();
    Complex* dst = out.col(g.rows[p]).data();
    for (std::size_t q = 0; q < n; ++q) dst[g.rows[q]] += (g.coeff[q] * cj) * src[g.source[q]];
  }
}

// m <- m + m† in place, in cache-sized tiles.
void add_adjoint_inplace(Matrix& m) {
  constexpr Eigen::Index kTile = 32;
  const Eigen::Index n = m.rows();
  for (Eigen::Index jb = 0; jb < n; jb += kTile) {
    const Eigen::Index je = std::min(n, jb + kTile);
    for (Eigen::Index ib = 0; ib <= jb; ib += kTile) {
      const Eigen::Index ie = std::min(n, ib + kTile);
      for (Eigen::Index j = jb; j < je; ++j) {
        const Eigen::Index iend = ib == jb ? j : ie;
        for (Eigen::Index i = ib; i < iend; ++i) {
          const Complex v = m(i, j) + std::conj(m(j, i));
          m(i, j) = v;
          m(j, i) = std::conj(v);
        }
      }
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) m(i, i) = Complex(2.0 * m(i, i).real(), 0.0);
}

}  // namespace

void Liouvillian::apply_hermitian(const Matrix& rho, double t, Matrix& out) const {
  // drift part: M = K(t) rho, out = M + M†
  Matrix& m = out;
  if (drift_split_) {
    m.noalias() = drift_diag_.asDiagonal() * rho;
    for (const auto& layer : drift_layers_) gather_left(layer, Complex(1.0, 0.0), rho, m);
  } else {
    m.noalias() = static_drift_col_ * rho;
  }
  for (std::size_t d = 0; d < driven_.size(); ++d) {
    const std::size_t idx = driven_[d];
    const Complex f = channels_[idx].input.at(t);
    if (f == Complex(0.0, 0.0)) continue;
    const Storage& r = channels_[idx].op.sparse();
    if (drive_r_[d].valid && drive_r_adj_[d].valid) {
      gather_left(drive_r_[d], std::conj(f), rho, m);
      gather_left(drive_r_adj_[d], -f, rho, m);
    } else {
      m.noalias() += std::conj(f) * (r * rho);
      m.noalias() -= f * (Storage(r.adjoint()) * rho);
    }
  }
  add_adjoint_inplace(out);
  for (const auto& g : groups_) {
    if (g.gather.valid) {
      gather_sandwich(g.gather, g.weight, rho, out);
    } else {
      Matrix left = g.op.sparse() * rho;
      out.noalias() += g.weight * (left * g.op.sparse().adjoint());
    }
  }
}

Matrix Liouvillian::apply(const Matrix& rho, double t) const {
  if (static_cast<std::size_t>(rho.rows()) != dim() || rho.rows() != rho.cols()) {
    throw std::invalid_argument("liouvillian_apply: dimension mismatch");
  }
  const Storage k = drift_storage(t);
  Matrix out = k * rho;
  out.noalias() += rho * Storage(k.adjoint());
  for (const auto& g : groups_) {
    Matrix left = g.op.sparse() * rho;
    out.noalias() += g.weight * (left * g.op.sparse().adjoint());
  }
  return out;
}

Matrix liouvillian_apply(const Liouvillian& generator, const QuantumState& rho, double t) {
  if (rho.is_pure()) throw std::invalid_argument("liouvillian_apply expects a mixed state");
  return generator.apply(rho.density(), t);
}

// ---------------------------------------------------------------------------
// Expectations

Complex expectation(const Matrix& rho, const OperatorMatrix& x) {
  if (static_cast<std::size_t>(rho.rows()) != x.dim()) throw std::invalid_argument("expectation: dimension mismatch");
  Complex acc(0.0, 0.0);
  const Storage& s = x.sparse();
  for (Eigen::Index r = 0; r < s.outerSize(); ++r) {
    for (Storage::InnerIterator it(s, r); it; ++it) acc += it.value() * rho(it.col(), it.row());
  }
  return acc;
}

Complex expectation(const Vector& psi, const OperatorMatrix& x) {
  if (static_cast<std::size_t>(psi.size()) != x.dim()) throw std::invalid_argument("expectation: dimension mismatch");
  return psi.dot(x.apply(psi));
}

Complex expectation(const QuantumState& state, const OperatorMatrix& x) {
  return state.is_pure() ? expectation(state.vector(), x) : expectation(state.density(), x);
}

double smallest_eigenvalue(const Matrix& rho, std::size_t dense_max_dim) {
  const Matrix herm = 0.5 * (rho + rho.adjoint());
  if (static_cast<std::size_t>(rho.rows()) <= dense_max_dim) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(herm, Eigen::EigenvaluesOnly);
    return solver.eigenvalues()[0];
  }
  return lanczos_smallest(herm);
}

// ---------------------------------------------------------------------------
// Propagation

PropagationResult propagate(const Liouvillian& generator, const QuantumState& rho0, const std::vector<double>& t_grid,
                            const PropagateOptions& opts) {
  if (!(opts.dt > 0.0)) throw std::invalid_argument("propagate: dt must be positive");
  if (t_grid.empty()) throw std::invalid_argument("propagate: empty time grid");
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    if (!(t_grid[i] > t_grid[i - 1])) throw std::invalid_argument("propagate: time grid must be increasing");
  }
  if (rho0.dim() != generator.dim()) throw std::invalid_argument("propagate: state dimension mismatch");
  const bool monitor_leak = opts.edge_mask.size() > 0;
  if (monitor_leak && static_cast<std::size_t>(opts.edge_mask.size()) != generator.dim()) {
    throw std::invalid_argument("propagate: edge mask dimension mismatch");
  }
  for (const auto& x : opts.observables) {
    if (x.dim() != generator.dim()) throw std::invalid_argument("propagate: observable dimension mismatch");
  }

  const Frame& frame = generator.frame();
  const QuantumState mixed0 = rho0.to_mixed();
  Matrix rho = frame.from_lab(mixed0.density(), t_grid.front());

  PropagationResult result;
  result.observables.assign(opts.observables.size(), {});

  auto edge_of = [&](const Matrix& r) {
    return monitor_leak ? (r.diagonal().real().array() * opts.edge_mask.array()).sum() : 0.0;
  };
  auto guard = [&](double t, double trace_err, double leak) {
    if (leak > opts.leak_tol) {
      std::ostringstream msg;
      msg << "edge population " << leak << " exceeds leak_tol " << opts.leak_tol << " at t=" << t
          << "; increase the truncation";
      throw NumericalGuardError(NumericalGuardError::Kind::edge_leak, msg.str());
    }
    if (trace_err > opts.trace_tol) {
      std::ostringstream msg;
      msg << "|Tr rho - 1| = " << trace_err << " exceeds trace_tol " << opts.trace_tol << " at t=" << t
          << "; reduce dt";
      throw NumericalGuardError(NumericalGuardError::Kind::trace_drift, msg.str());
    }
  };
  auto snapshot = [&](double t) {
    Matrix lab = frame.to_lab(rho, t);
    const double tr_err = std::abs(lab.trace().real() - 1.0);
    const double leak = edge_of(lab);
    result.times.push_back(t);
    result.trace_err.push_back(tr_err);
    result.edge_leak.push_back(leak);
    if (opts.check_positivity) {
      const double lmin = smallest_eigenvalue(lab, opts.dense_eigen_max_dim);
      result.min_eigenvalue.push_back(lmin);
      result.pos_err.push_back(std::min(0.0, lmin));
    } else {
      result.min_eigenvalue.push_back(std::numeric_limits<double>::quiet_NaN());
      result.pos_err.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    for (std::size_t k = 0; k < opts.observables.size(); ++k) {
      result.observables[k].push_back(expectation(lab, opts.observables[k]));
    }
    if (opts.keep_states) result.states.push_back(QuantumState::mixed(std::move(lab)));
  };

  guard(t_grid.front(), std::abs(rho.trace().real() - 1.0), edge_of(rho));
  snapshot(t_grid.front());

  const auto dim = static_cast<Eigen::Index>(generator.dim());
  Matrix k1(dim, dim), k2(dim, dim), k3(dim, dim), k4(dim, dim), stage(dim, dim);
  auto rk4 = [&](Matrix& r, double t, double h) {
    generator.apply_hermitian(r, t, k1);
    stage = r + (0.5 * h) * k1;
    generator.apply_hermitian(stage, t + 0.5 * h, k2);
    stage = r + (0.5 * h) * k2;
    generator.apply_hermitian(stage, t + 0.5 * h, k3);
    stage = r + h * k3;
    generator.apply_hermitian(stage, t + h, k4);
    r += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    add_adjoint_inplace(r);
    r *= 0.5;
  };
  for (std::size_t seg = 1; seg < t_grid.size(); ++seg) {
    const double t0 = t_grid[seg - 1];
    const double span = t_grid[seg] - t0;
    const auto n_steps = static_cast<std::size_t>(std::ceil(span / opts.dt - 1e-9));
    const double h = span / static_cast<double>(n_steps);
    if (seg == 1 && opts.self_check) {
      // one step at h against two at h/2; Richardson factor 16/15 for a 4th-order method
      Matrix full = rho;
      Matrix halves = rho;
      rk4(full, t0, h);
      rk4(halves, t0, 0.5 * h);
      rk4(halves, t0 + 0.5 * h, 0.5 * h);
      result.self_check_error = (full - halves).cwiseAbs().maxCoeff() * 16.0 / 15.0;
    }
    for (std::size_t s = 0; s < n_steps; ++s) {
      const double t = t0 + static_cast<double>(s) * h;
      rk4(rho, t, h);
      ++result.steps;
      const double tr_err = std::abs(rho.trace().real() - 1.0);
      const double leak = edge_of(rho);
      result.max_step_trace_err = std::max(result.max_step_trace_err, tr_err);
      result.max_step_edge_leak = std::max(result.max_step_edge_leak, leak);
      guard(t + h, tr_err, leak);
    }
    snapshot(t_grid[seg]);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Model generator

bool rotating_frame_exact(const ModelParams& params) {
  double sum_s = 0.0;
  double sum_p = 0.0;
  for (double w : params.ws) sum_s += w;
  for (double w : params.wp) sum_p += w;
  return sum_s == sum_p;
}

std::vector<LindbladChannel> model_channels(const ModelParams& params, const ModeLayout& layout, FrameKind frame) {
  const ChannelSet set = flatten_channels(params, layout);
  std::vector<LindbladChannel> out;
  out.reserve(set.size());
  for (const auto& ch : set) {
    LindbladChannel lc{ch.op, {}};
    if (ch.role == ChannelRole::pump_input && params.drive.lambda != Complex(0.0, 0.0)) {
      // f_j(t) = i lambda e^{-i wp_j t} / conj(alpha4_j); the rotating frame absorbs the carrier.
      const Complex f0 = pump_input_amplitude(params, ch.local, 0.0);
      const double w = params.wp[static_cast<std::size_t>(ch.local)];
      lc.input = CoherentInput{params.drive.horizon > 0.0 ? f0 : Complex(0.0, 0.0),
                               frame == FrameKind::lab ? w : 0.0, params.drive.horizon};
    }
    out.push_back(std::move(lc));
  }
  return out;
}

Liouvillian model_liouvillian(const ModelParams& params, const ModeLayout& layout, FrameKind frame) {
  validate(params, layout);
  if (frame == FrameKind::rotating && !rotating_frame_exact(params)) frame = FrameKind::lab;
  auto channels = model_channels(params, layout, frame);
  if (frame == FrameKind::lab) {
    return Liouvillian(hamiltonian(params, layout), std::move(channels));
  }
  OperatorMatrix h = interaction(layout).scaled(kI * (params.g / 2.0));
  return Liouvillian(std::move(h), std::move(channels), Frame(number_spectrum(params, layout)));
}

}  // namespace mposim
