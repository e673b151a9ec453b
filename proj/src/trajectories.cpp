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

#include "mposim/trajectories.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mposim/errors.hpp"
#include "mposim/rng.hpp"

namespace mposim {

namespace {

constexpr Complex kI(0.0, 1.0);
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kJumpGuard = 0.1;

using Storage = OperatorMatrix::Storage;

enum class Use { inactive, counted, homodyne, traced };

std::size_t step_index(double t, double dt, const char* what) {
  const double x = t / dt;
  const double r = std::round(x);
  if (t < 0.0 || std::abs(x - r) > 1e-6) {
    std::ostringstream msg;
    msg << what << " " << t << " is not a nonnegative multiple of dt=" << dt;
    throw std::invalid_argument(msg.str());
  }
  return static_cast<std::size_t>(r);
}

// Shared, read-only description of one unraveling run.
struct Plan {
  const UnravelingModel* model = nullptr;
  UnravelingMode mode = UnravelingMode::jump;
  std::size_t dim = 0;
  std::size_t n_steps = 0;
  double dt = 0.0;
  std::vector<Use> use;
  std::vector<int> counted;                 // channel indices, record order
  std::vector<HomodyneDetector> diffusive;  // homodyne detectors active in this mode
  std::vector<std::size_t> sample_steps;
  Storage k_static;                         // -iH - 1/2 sum R†R
  std::vector<Storage> r;                   // R_k
  std::vector<Storage> r_adj;               // R_k† for driven channels
  std::vector<OperatorMatrix> r_dag_r;      // R_k† R_k
};

Plan make_plan(UnravelingMode mode, const UnravelingModel& model, const TrajectoryOptions& opts) {
  if (!(opts.dt > 0.0)) throw std::invalid_argument("trajectory dt must be positive");
  if (!(opts.t_final >= 0.0)) throw std::invalid_argument("trajectory t_final must be nonnegative");
  if (opts.record_stride < 1) throw std::invalid_argument("record_stride must be >= 1");
  Plan plan;
  plan.model = &model;
  plan.mode = mode;
  plan.dt = opts.dt;
  plan.dim = model.generator.dim();
  plan.n_steps = step_index(opts.t_final, opts.dt, "t_final");
  for (double t : opts.sample_times) {
    const std::size_t s = step_index(t, opts.dt, "sample time");
    if (s > plan.n_steps) throw std::invalid_argument("sample time beyond t_final");
    if (!plan.sample_steps.empty() && s < plan.sample_steps.back()) {
      throw std::invalid_argument("sample times must be nondecreasing");
    }
    plan.sample_steps.push_back(s);
  }

  const auto& channels = model.generator.channels();
  const std::size_t d = channels.size();
  if (model.frame_frequency.size() != d) throw std::invalid_argument("frame_frequency must have one entry per channel");
  plan.use.assign(d, Use::traced);
  for (std::size_t k = 0; k < d; ++k) {
    if (channels[k].op.is_zero() && !channels[k].input.active()) plan.use[k] = Use::inactive;
  }
  auto check_channel = [&](int k) {
    if (k < 0 || static_cast<std::size_t>(k) >= d) throw std::invalid_argument("detector channel out of range");
  };
  for (const auto& h : model.homodyne) {
    check_channel(h.channel);
    if (mode == UnravelingMode::homodyne) {
      plan.use[static_cast<std::size_t>(h.channel)] = Use::homodyne;
      plan.diffusive.push_back(h);
    } else if (model.count_homodyne_in_jump_mode) {
      plan.use[static_cast<std::size_t>(h.channel)] = Use::counted;
    }
  }
  for (int k : model.counting) {
    check_channel(k);
    if (plan.use[static_cast<std::size_t>(k)] == Use::homodyne) {
      throw std::invalid_argument("channel " + std::to_string(k + 1) + " is assigned to two detectors");
    }
    plan.use[static_cast<std::size_t>(k)] = Use::counted;
  }
  // record order: counting detectors first, then homodyne-assigned channels counted in jump mode
  for (int k : model.counting) plan.counted.push_back(k);
  if (mode == UnravelingMode::jump && model.count_homodyne_in_jump_mode) {
    for (const auto& h : model.homodyne) {
      if (std::find(plan.counted.begin(), plan.counted.end(), h.channel) == plan.counted.end()) {
        plan.counted.push_back(h.channel);
      }
    }
  }

  OperatorMatrix r_sum = OperatorMatrix::zero(plan.dim);
  plan.r.resize(d);
  plan.r_adj.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    plan.r[k] = channels[k].op.sparse();
    if (channels[k].input.active()) plan.r_adj[k] = channels[k].op.adjoint().sparse();
    plan.r_dag_r.push_back(channels[k].op.adjoint() * channels[k].op);
    r_sum = r_sum + plan.r_dag_r.back();
  }
  plan.k_static = (model.generator.hamiltonian().scaled(-kI) - r_sum.scaled(0.5)).sparse();
  return plan;
}

// K(t) x with K(t) = K_static - sum_driven (f R† + |f|^2/2); x is a state vector or a density matrix.
template <class State>
void drift(const Plan& plan, double t, const State& x, State& out) {
  out.noalias() = plan.k_static * x;
  const auto& channels = plan.model->generator.channels();
  for (std::size_t k = 0; k < channels.size(); ++k) {
    if (!channels[k].input.active()) continue;
    const Complex f = channels[k].input.at(t);
    if (f == Complex(0.0, 0.0)) continue;
    out.noalias() -= f * (plan.r_adj[k] * x);
    out -= (0.5 * std::norm(f)) * x;
  }
}

Vector channel_apply(const Plan& plan, std::size_t k, double t, const Vector& psi) {
  Vector v = plan.r[k] * psi;
  const Complex f = plan.model->generator.channels()[k].input.at(t);
  if (f != Complex(0.0, 0.0)) v += f * psi;
  return v;
}

Matrix channel_apply(const Plan& plan, std::size_t k, double t, const Matrix& rho) {
  Matrix v = plan.r[k] * rho;
  const Complex f = plan.model->generator.channels()[k].input.at(t);
  if (f != Complex(0.0, 0.0)) v += f * rho;
  return v;
}

// Phase turning L_k (frame picture) into the detected operator e^{-i phi(t)} L_k^lab.
Complex lo_phase(const Plan& plan, const HomodyneDetector& h, double t) {
  const double w = h.lo_frequency + plan.model->frame_frequency[static_cast<std::size_t>(h.channel)];
  return std::exp(Complex(0.0, w * t - h.theta));
}

double edge_population(const Plan& plan, const Vector& psi) {
  const auto& mask = plan.model->edge_mask;
  if (mask.size() == 0) return 0.0;
  return (psi.cwiseAbs2().array() * mask.array()).sum();
}

double edge_population(const Plan& plan, const Matrix& rho) {
  const auto& mask = plan.model->edge_mask;
  if (mask.size() == 0) return 0.0;
  return (rho.diagonal().real().array() * mask.array()).sum();
}

void check_guards(const Plan& plan, double t, double max_rate, double leak) {
  if (plan.dt * max_rate > kJumpGuard) {
    std::ostringstream msg;
    msg << "dt * max_k ||L_k psi||^2 = " << plan.dt * max_rate << " exceeds " << kJumpGuard << " at t=" << t
        << "; reduce dt";
    throw NumericalGuardError(NumericalGuardError::Kind::step_too_coarse, msg.str());
  }
  if (leak > plan.model->leak_tol) {
    std::ostringstream msg;
    msg << "edge population " << leak << " exceeds leak_tol " << plan.model->leak_tol << " at t=" << t
        << "; increase the truncation";
    throw NumericalGuardError(NumericalGuardError::Kind::edge_leak, msg.str());
  }
}

// State-kind specific pieces of the stepping loop.
struct PureOps {
  using State = Vector;
  static double rate(const Plan& plan, std::size_t k, double t, const Vector& psi, Vector* out) {
    Vector v = channel_apply(plan, k, t, psi);
    const double n = v.squaredNorm();
    if (out) *out = std::move(v);
    return n;
  }
  static Complex mean_c(const Vector& psi, const Vector& c_psi) { return psi.dot(c_psi); }
  static void jump(Vector& psi, const Vector& l_psi) { psi = l_psi / l_psi.norm(); }
  static void normalize(Vector& psi) { psi /= psi.norm(); }
  static Complex expect(const Vector& psi, const OperatorMatrix& x) { return expectation(psi, x); }
  static QuantumState wrap(Vector psi) { return QuantumState::pure(std::move(psi)); }
};

struct DensityOps {
  using State = Matrix;
  static double rate(const Plan& plan, std::size_t k, double t, const Matrix& rho, Matrix* out) {
    if (!out) {
      // Tr(L† L rho) with L = R + f: <R†R> + 2 Re(conj(f) <R>) + |f|^2
      const Complex f = plan.model->generator.channels()[k].input.at(t);
      double n = expectation(rho, plan.r_dag_r[k]).real();
      if (f != Complex(0.0, 0.0)) {
        Complex tr_r(0.0, 0.0);
        const Storage& r = plan.r[k];
        for (Eigen::Index i = 0; i < r.outerSize(); ++i)
          for (Storage::InnerIterator it(r, i); it; ++it) tr_r += it.value() * rho(it.col(), it.row());
        n += 2.0 * (std::conj(f) * tr_r).real() + std::norm(f) * rho.trace().real();
      }
      return n;
    }
    Matrix lr = channel_apply(plan, k, t, rho);
    Matrix lrl = channel_apply(plan, k, t, Matrix(lr.adjoint())).adjoint();  // L rho L†
    const double n = lrl.trace().real();
    if (out) *out = std::move(lrl);
    return n;
  }
  static void jump(Matrix& rho, const Matrix& lrl) { rho = lrl / lrl.trace().real(); }
  static void normalize(Matrix& rho) {
    Matrix h = 0.5 * (rho + rho.adjoint());
    rho = h / h.trace().real();
  }
  static Complex expect(const Matrix& rho, const OperatorMatrix& x) { return expectation(rho, x); }
  static QuantumState wrap(Matrix rho) { return QuantumState::mixed(std::move(rho)); }
};

class Stepper {
 public:
  Stepper(const Plan& plan, const TrajectoryOptions& opts, std::uint64_t seed)
      : plan_(plan), opts_(opts), seed_(seed) {}

  TrajectoryResult run_pure(Vector psi) {
    TrajectoryResult res = start();
    const auto& channels = plan_.model->generator.channels();
    const std::size_t d = channels.size();
    std::vector<Vector> lpsi(d);
    std::vector<double> n(d, 0.0);
    Vector k1(plan_.dim), k2(plan_.dim), k3(plan_.dim), k4(plan_.dim), stage(plan_.dim);
    std::size_t next_sample = 0;
    sample_pure(res, psi, 0, next_sample);
    for (std::size_t s = 0; s < plan_.n_steps; ++s) {
      const double t = static_cast<double>(s) * plan_.dt;
      const double h = plan_.dt;
      double max_rate = 0.0;
      double p_jump = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        if (plan_.use[k] == Use::inactive) continue;
        n[k] = PureOps::rate(plan_, k, t, psi, &lpsi[k]);
        max_rate = std::max(max_rate, n[k]);
        if (plan_.use[k] != Use::homodyne) p_jump += n[k] * h;
      }
      check_guards(plan_, t, max_rate, 0.0);

      StepRng rng(seed_, s);
      const double u_jump = rng.uniform();
      const double u_pick = rng.uniform();
      std::vector<double> dw(plan_.diffusive.size());
      for (double& w : dw) w = std::sqrt(h) * rng.normal();

      std::vector<double> x(plan_.diffusive.size());
      std::vector<Vector> c_psi(plan_.diffusive.size());
      for (std::size_t j = 0; j < plan_.diffusive.size(); ++j) {
        const auto k = static_cast<std::size_t>(plan_.diffusive[j].channel);
        c_psi[j] = lo_phase(plan_, plan_.diffusive[j], t) * lpsi[k];
        x[j] = 2.0 * psi.dot(c_psi[j]).real();
      }

      if (u_jump < p_jump) {
        const std::size_t k = pick(n, u_pick * p_jump / h);
        PureOps::jump(psi, lpsi[k]);
        if (plan_.use[k] == Use::counted) record_jump(res, static_cast<int>(k), t + h);
      } else {
        drift(plan_, t, psi, k1);
        stage = psi + (0.5 * h) * k1;
        drift(plan_, t + 0.5 * h, stage, k2);
        stage = psi + (0.5 * h) * k2;
        drift(plan_, t + 0.5 * h, stage, k3);
        stage = psi + h * k3;
        drift(plan_, t + h, stage, k4);
        stage = psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        for (std::size_t j = 0; j < c_psi.size(); ++j) {
          stage += (0.5 * x[j] * h + dw[j]) * c_psi[j];
          stage -= (0.125 * x[j] * x[j] * h + 0.5 * x[j] * dw[j]) * psi;
        }
        psi = std::move(stage);
        stage.resize(plan_.dim);
        PureOps::normalize(psi);
      }
      for (std::size_t j = 0; j < plan_.diffusive.size(); ++j) record_signal(res, j, s, t + h, x[j] * h + dw[j]);
      check_guards(plan_, t + h, 0.0, edge_population(plan_, psi));
      ++res.steps;
      sample_pure(res, psi, s + 1, next_sample);
    }
    res.final_state = PureOps::wrap(plan_.model->generator.frame().to_lab(psi, plan_.dt * plan_.n_steps));
    return res;
  }

  TrajectoryResult run_density(Matrix rho) {
    TrajectoryResult res = start();
    const auto& channels = plan_.model->generator.channels();
    const std::size_t d = channels.size();
    std::vector<Matrix> lrl(d);
    std::vector<double> n(d, 0.0);
    std::size_t next_sample = 0;
    sample_density(res, rho, 0, next_sample);
    const std::size_t dim = plan_.dim;
    Matrix k1(dim, dim), k2(dim, dim), k3(dim, dim), k4(dim, dim), stage(dim, dim);
    for (std::size_t s = 0; s < plan_.n_steps; ++s) {
      const double t = static_cast<double>(s) * plan_.dt;
      const double h = plan_.dt;
      double max_rate = 0.0;
      double p_jump = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        if (plan_.use[k] == Use::inactive) continue;
        n[k] = DensityOps::rate(plan_, k, t, rho, nullptr);
        max_rate = std::max(max_rate, n[k]);
        if (plan_.use[k] == Use::counted) p_jump += n[k] * h;
      }
      check_guards(plan_, t, max_rate, 0.0);

      StepRng rng(seed_, s);
      const double u_jump = rng.uniform();
      const double u_pick = rng.uniform();
      std::vector<double> dw(plan_.diffusive.size());
      for (double& w : dw) w = std::sqrt(h) * rng.normal();

      std::vector<double> x(plan_.diffusive.size());
      std::vector<Matrix> c_rho(plan_.diffusive.size());
      for (std::size_t j = 0; j < plan_.diffusive.size(); ++j) {
        const auto k = static_cast<std::size_t>(plan_.diffusive[j].channel);
        c_rho[j] = lo_phase(plan_, plan_.diffusive[j], t) * channel_apply(plan_, k, t, rho);
        x[j] = 2.0 * c_rho[j].trace().real();
      }

      if (u_jump < p_jump) {
        std::vector<double> monitored(d, 0.0);
        for (std::size_t k = 0; k < d; ++k) {
          if (plan_.use[k] == Use::counted) monitored[k] = n[k];
        }
        const std::size_t k = pick(monitored, u_pick * p_jump / h);
        DensityOps::rate(plan_, k, t, rho, &lrl[k]);
        DensityOps::jump(rho, lrl[k]);
        record_jump(res, static_cast<int>(k), t + h);
      } else {
        // no-jump linear map: monitored counting channels lose their recycling term
        auto generator = [&](double tt, const Matrix& r, Matrix& out) {
          drift(plan_, tt, r, out);
          out += Matrix(out.adjoint());
          for (std::size_t k = 0; k < d; ++k) {
            if (plan_.use[k] == Use::traced || plan_.use[k] == Use::homodyne) {
              Matrix term;
              DensityOps::rate(plan_, k, tt, r, &term);
              out += term;
            }
          }
        };
        generator(t, rho, k1);
        stage = rho + (0.5 * h) * k1;
        generator(t + 0.5 * h, stage, k2);
        stage = rho + (0.5 * h) * k2;
        generator(t + 0.5 * h, stage, k3);
        stage = rho + h * k3;
        generator(t + h, stage, k4);
        stage = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        for (std::size_t j = 0; j < c_rho.size(); ++j) {
          stage += dw[j] * (c_rho[j] + Matrix(c_rho[j].adjoint()) - x[j] * rho);
        }
        rho = std::move(stage);
        stage.resize(dim, dim);
        DensityOps::normalize(rho);
      }
      for (std::size_t j = 0; j < plan_.diffusive.size(); ++j) record_signal(res, j, s, t + h, x[j] * h + dw[j]);
      check_guards(plan_, t + h, 0.0, edge_population(plan_, rho));
      ++res.steps;
      sample_density(res, rho, s + 1, next_sample);
    }
    res.final_state = DensityOps::wrap(plan_.model->generator.frame().to_lab(rho, plan_.dt * plan_.n_steps));
    return res;
  }

 private:
  TrajectoryResult start() {
    TrajectoryResult res;
    res.record.seed = seed_;
    res.record.dt = plan_.dt;
    res.record.t_final = plan_.dt * static_cast<double>(plan_.n_steps);
    for (int k : plan_.counted) res.record.counting.push_back({k, {}});
    for (const auto& h : plan_.diffusive) res.record.homodyne.push_back({h.channel, {}});
    const std::size_t ns = plan_.sample_steps.size();
    res.samples.assign(opts_.observables.size(), std::vector<double>(ns, 0.0));
    res.rates.assign(plan_.counted.size(), std::vector<double>(ns, 0.0));
    res.signals.assign(plan_.diffusive.size(), std::vector<double>(ns, 0.0));
    res.counts.assign(plan_.counted.size(), std::vector<double>(ns, 0.0));
    bin_.assign(plan_.diffusive.size(), 0.0);
    return res;
  }

  static std::size_t pick(const std::vector<double>& weights, double target) {
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (weights[k] <= 0.0) continue;
      last = k;
      acc += weights[k];
      if (target < acc) return k;
    }
    return last;
  }

  void record_jump(TrajectoryResult& res, int channel, double t) {
    for (auto& c : res.record.counting) {
      if (c.channel == channel) {
        c.times.push_back(t);
        return;
      }
    }
  }

  void record_signal(TrajectoryResult& res, std::size_t j, std::size_t step, double t_end, double dy) {
    bin_[j] += dy;
    const bool close = (step + 1) % static_cast<std::size_t>(opts_.record_stride) == 0 || step + 1 == plan_.n_steps;
    if (close) {
      res.record.homodyne[j].increments.emplace_back(t_end, bin_[j]);
      bin_[j] = 0.0;
    }
  }

  template <class Ops, class State>
  void sample_common(TrajectoryResult& res, const State& state, std::size_t step, std::size_t& next) {
    const double t = static_cast<double>(step) * plan_.dt;
    while (next < plan_.sample_steps.size() && plan_.sample_steps[next] == step) {
      const State lab = plan_.model->generator.frame().to_lab(state, t);
      for (std::size_t o = 0; o < opts_.observables.size(); ++o) {
        res.samples[o][next] = Ops::expect(lab, opts_.observables[o]).real();
      }
      for (std::size_t c = 0; c < plan_.counted.size(); ++c) {
        const auto k = static_cast<std::size_t>(plan_.counted[c]);
        res.rates[c][next] = Ops::rate(plan_, k, t, state, nullptr);
        res.counts[c][next] = static_cast<double>(res.record.counting[c].times.size());
      }
      for (std::size_t j = 0; j < plan_.diffusive.size(); ++j) {
        const auto k = static_cast<std::size_t>(plan_.diffusive[j].channel);
        const Complex ph = lo_phase(plan_, plan_.diffusive[j], t);
        if constexpr (std::is_same_v<State, Vector>) {
          res.signals[j][next] = 2.0 * (ph * state.dot(channel_apply(plan_, k, t, state))).real();
        } else {
          res.signals[j][next] = 2.0 * (ph * channel_apply(plan_, k, t, state).trace()).real();
        }
      }
      ++next;
    }
  }

  void sample_pure(TrajectoryResult& res, const Vector& psi, std::size_t step, std::size_t& next) {
    sample_common<PureOps>(res, psi, step, next);
  }
  void sample_density(TrajectoryResult& res, const Matrix& rho, std::size_t step, std::size_t& next) {
    sample_common<DensityOps>(res, rho, step, next);
  }

  const Plan& plan_;
  const TrajectoryOptions& opts_;
  std::uint64_t seed_;
  std::vector<double> bin_;
};

bool has_traced_channels(const Plan& plan) {
  return std::any_of(plan.use.begin(), plan.use.end(), [](Use u) { return u == Use::traced; });
}

double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

SeriesStats reduce(std::string label, const std::vector<std::vector<double>>& per_traj, std::size_t n_samples) {
  SeriesStats out;
  out.label = std::move(label);
  const std::size_t n = per_traj.size();
  out.mean.assign(n_samples, 0.0);
  out.se.assign(n_samples, kNaN);
  std::vector<double> col(n);
  for (std::size_t t = 0; t < n_samples; ++t) {
    for (std::size_t i = 0; i < n; ++i) col[i] = per_traj[i][t];
    const double mean = pairwise_sum(col.data(), n) / static_cast<double>(n);
    out.mean[t] = mean;
    if (n >= 2) {
      for (std::size_t i = 0; i < n; ++i) col[i] = (col[i] - mean) * (col[i] - mean);
      const double var = pairwise_sum(col.data(), n) / static_cast<double>(n - 1);
      out.se[t] = std::sqrt(var / static_cast<double>(n));
    }
  }
  return out;
}

void append_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

}  // namespace

const char* to_string(UnravelingMode mode) { return mode == UnravelingMode::jump ? "jump" : "homodyne"; }

UnravelingModel model_unraveling(const ModelParams& params, const ModeLayout& layout,
                                 const DetectorAssignment& detectors, FrameKind frame) {
  UnravelingModel model;
  model.generator = model_liouvillian(params, layout, frame);
  const bool rotating = !model.generator.frame().is_lab();
  const ChannelSet set = flatten_channels(params, layout);
  auto mode_frequency = [&](int mode) {
    return layout.is_pump(mode) ? params.wp[static_cast<std::size_t>(mode - layout.n_sub())]
                                : params.ws[static_cast<std::size_t>(mode)];
  };
  for (const auto& ch : set) {
    const double w = rotating ? mode_frequency(ch.mode) : 0.0;
    model.frame_frequency.push_back(ch.creation ? w : -w);
  }
  model.counting = detectors.counting;
  for (int k : detectors.homodyne) {
    if (k < 0 || static_cast<std::size_t>(k) >= set.size()) throw std::invalid_argument("homodyne channel out of range");
    const Channel& ch = set[static_cast<std::size_t>(k)];
    HomodyneDetector det{k, 0.0, mode_frequency(ch.mode)};
    if (!layout.is_pump(ch.mode) && !params.drive.theta.empty()) {
      det.theta = params.drive.theta[static_cast<std::size_t>(ch.mode)];
    }
    model.homodyne.push_back(det);
  }
  model.edge_mask = edge_mask(layout);
  return model;
}

TrajectoryResult unravel(UnravelingMode mode, const UnravelingModel& model, const QuantumState& psi0,
                         const TrajectoryOptions& opts, std::uint64_t seed) {
  if (psi0.dim() != model.generator.dim()) throw std::invalid_argument("initial state dimension mismatch");
  const Plan plan = make_plan(mode, model, opts);
  bool density = false;
  switch (opts.method) {
    case StateMethod::automatic:
      density = !psi0.is_pure() || (has_traced_channels(plan) && plan.dim <= opts.density_max_dim);
      break;
    case StateMethod::pure:
      if (!psi0.is_pure()) throw std::invalid_argument("pure-state unraveling needs a pure initial state");
      break;
    case StateMethod::density:
      density = true;
      break;
  }
  Stepper stepper(plan, opts, seed);
  const double t0 = 0.0;
  if (density) return stepper.run_density(model.generator.frame().from_lab(psi0.to_mixed().density(), t0));
  if (std::abs(psi0.norm() - 1.0) > 1e-10) throw std::invalid_argument("initial state must be normalized");
  return stepper.run_pure(model.generator.frame().from_lab(psi0.vector(), t0));
}

TrajectoryResult jump_unraveling(const UnravelingModel& model, const QuantumState& psi0, const TrajectoryOptions& opts,
                                 std::uint64_t seed) {
  return unravel(UnravelingMode::jump, model, psi0, opts, seed);
}

TrajectoryResult homodyne_unraveling(const UnravelingModel& model, const QuantumState& psi0,
                                     const TrajectoryOptions& opts, std::uint64_t seed) {
  return unravel(UnravelingMode::homodyne, model, psi0, opts, seed);
}

unsigned default_thread_count() {
  if (const char* env = std::getenv("MPO_SIM_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

EnsembleStats ensemble_average(const UnravelingModel& model, const QuantumState& psi0, const EnsembleOptions& opts) {
  if (opts.n_traj < 1) throw std::invalid_argument("n_traj must be >= 1");
  if (!opts.observable_labels.empty() && opts.observable_labels.size() != opts.trajectory.observables.size()) {
    throw std::invalid_argument("observable_labels must match the observables");
  }
  make_plan(opts.mode, model, opts.trajectory);  // validate once up front

  const std::size_t n = opts.n_traj;
  std::vector<TrajectoryResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        results[i] = unravel(opts.mode, model, psi0, opts.trajectory, derive_seed(opts.seed, i));
        if (!opts.keep_records) results[i].record = MeasurementRecord{};
      } catch (...) {
        errors[i] = std::current_exception();
        failed.store(true);
      }
    }
  };
  const unsigned threads = std::min<std::size_t>(opts.threads ? opts.threads : default_thread_count(), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    const std::string prefix = "trajectory " + std::to_string(i) + ": ";
    try {
      std::rethrow_exception(errors[i]);
    } catch (const NumericalGuardError& e) {
      throw NumericalGuardError(e.kind(), prefix + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error(prefix + e.what());
    }
  }

  EnsembleStats stats;
  stats.n_traj = n;
  stats.se_defined = n >= 2;
  for (double t : opts.trajectory.sample_times) stats.times.push_back(t);
  const std::size_t ns = stats.times.size();
  auto collect = [&](auto member, std::size_t idx) {
    std::vector<std::vector<double>> per(n);
    for (std::size_t i = 0; i < n; ++i) per[i] = (results[i].*member)[idx];
    return per;
  };
  for (std::size_t o = 0; o < opts.trajectory.observables.size(); ++o) {
    const std::string label = opts.observable_labels.empty() ? "obs" + std::to_string(o) : opts.observable_labels[o];
    stats.observables.push_back(reduce(label, collect(&TrajectoryResult::samples, o), ns));
  }
  const TrajectoryResult& first = results.front();
  for (std::size_t c = 0; c < first.rates.size(); ++c) {
    const std::string ch = std::to_string(first.record.counting.empty() ? 0 : first.record.counting[c].channel + 1);
    stats.rates.push_back(reduce("rate_ch" + ch, collect(&TrajectoryResult::rates, c), ns));
    stats.counts.push_back(reduce("counts_ch" + ch, collect(&TrajectoryResult::counts, c), ns));
  }
  const Plan plan = make_plan(opts.mode, model, opts.trajectory);
  for (std::size_t j = 0; j < first.signals.size(); ++j) {
    const std::string ch = std::to_string(plan.diffusive[j].channel + 1);
    stats.signals.push_back(reduce("signal_ch" + ch, collect(&TrajectoryResult::signals, j), ns));
  }
  if (opts.keep_records) {
    stats.records.reserve(n);
    for (auto& r : results) stats.records.push_back(std::move(r.record));
  }
  return stats;
}

FunctionalEstimate characteristic_functional(const std::vector<MeasurementRecord>& records,
                                             const std::vector<double>& kappa, const std::vector<double>& partition) {
  if (records.empty()) throw std::invalid_argument("characteristic_functional needs at least one record");
  if (partition.size() < 2) throw std::invalid_argument("partition needs at least two time points");
  for (std::size_t l = 1; l < partition.size(); ++l) {
    if (!(partition[l] > partition[l - 1])) throw std::invalid_argument("partition must be increasing");
  }
  const std::size_t n = records.size();
  std::vector<Complex> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const MeasurementRecord& rec = records[i];
    if (kappa.size() != rec.monitored()) {
      throw std::invalid_argument("kappa has " + std::to_string(kappa.size()) + " entries but the record monitors " +
                                  std::to_string(rec.monitored()) + " channels");
    }
    if (rec.t_final < partition.back() - 1e-12) throw std::invalid_argument("record shorter than the partition");
    double phase = 0.0;
    for (std::size_t l = 1; l < partition.size(); ++l) {
      const double a = partition[l - 1];
      const double b = partition[l];
      std::size_t k = 0;
      for (const auto& c : rec.counting) {
        double dx = 0.0;
        for (double t : c.times) dx += (t > a && t <= b) ? 1.0 : 0.0;
        phase += kappa[k++] * dx;
      }
      for (const auto& h : rec.homodyne) {
        double dx = 0.0;
        for (const auto& [t, dy] : h.increments) dx += (t > a && t <= b) ? dy : 0.0;
        phase += kappa[k++] * dx;
      }
    }
    values[i] = phase == 0.0 ? Complex(1.0, 0.0) : std::exp(Complex(0.0, phase));
  }
  std::vector<double> re(n), im(n);
  for (std::size_t i = 0; i < n; ++i) {
    re[i] = values[i].real();
    im[i] = values[i].imag();
  }
  const Complex mean(pairwise_sum(re.data(), n) / static_cast<double>(n), pairwise_sum(im.data(), n) / static_cast<double>(n));
  FunctionalEstimate est{mean, kNaN};
  if (n >= 2) {
    for (std::size_t i = 0; i < n; ++i) re[i] = std::norm(values[i] - mean);
    est.se = std::sqrt(pairwise_sum(re.data(), n) / static_cast<double>(n - 1) / static_cast<double>(n));
  }
  return est;
}

void write_record_jsonl(std::ostream& out, std::size_t traj, const MeasurementRecord& record) {
  std::string line = "{\"traj\":" + std::to_string(traj) + ",\"seed\":" + std::to_string(record.seed) + ",\"jumps\":{";
  for (std::size_t c = 0; c < record.counting.size(); ++c) {
    if (c) line += ',';
    line += "\"" + std::to_string(record.counting[c].channel + 1) + "\":[";
    const auto& times = record.counting[c].times;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (i) line += ',';
      append_double(line, times[i]);
    }
    line += ']';
  }
  line += "},\"homodyne\":{";
  for (std::size_t h = 0; h < record.homodyne.size(); ++h) {
    if (h) line += ',';
    line += "\"" + std::to_string(record.homodyne[h].channel + 1) + "\":[";
    const auto& inc = record.homodyne[h].increments;
    for (std::size_t i = 0; i < inc.size(); ++i) {
      if (i) line += ',';
      line += '[';
      append_double(line, inc[i].first);
      line += ',';
      append_double(line, inc[i].second);
      line += ']';
    }
    line += ']';
  }
  line += "}}\n";
  out << line;
}

}  // namespace mposim
