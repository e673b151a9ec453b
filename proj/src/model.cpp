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

#include "mposim/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mposim {

namespace {

constexpr Complex kI(0.0, 1.0);

bool block_is_sub(int block) { return block % 2 == 1; }

ChannelRole role_of_block(int block) {
  switch (block) {
    case 1:
      return ChannelRole::photocount_sub;
    case 2:
      return ChannelRole::photocount_pump;
    case 3:
      return ChannelRole::homodyne;
    case 4:
      return ChannelRole::pump_input;
    case 5:
      return ChannelRole::loss_a;
    case 6:
      return ChannelRole::loss_b;
    case 7:
      return ChannelRole::thermal_a;
    default:
      return ChannelRole::thermal_b;
  }
}

}  // namespace

const char* to_string(ChannelRole role) {
  switch (role) {
    case ChannelRole::photocount_sub:
      return "photocount-sub";
    case ChannelRole::photocount_pump:
      return "photocount-pump";
    case ChannelRole::homodyne:
      return "homodyne";
    case ChannelRole::pump_input:
      return "pump-input";
    case ChannelRole::loss_a:
      return "loss-a";
    case ChannelRole::loss_b:
      return "loss-b";
    case ChannelRole::thermal_a:
      return "thermal-a†";
    case ChannelRole::thermal_b:
      return "thermal-b†";
  }
  return "unknown";
}

void validate(const ModelParams& params, const ModeLayout& layout) {
  const auto n = static_cast<std::size_t>(layout.n_sub());
  const auto m = static_cast<std::size_t>(layout.n_pump());
  if (params.ws.size() != n) throw std::invalid_argument("ws must have one frequency per subharmonic mode");
  if (params.wp.size() != m) throw std::invalid_argument("wp must have one frequency per pump mode");
  for (int l = 1; l <= 8; ++l) {
    const std::size_t expected = block_is_sub(l) ? n : m;
    if (params.alpha[static_cast<std::size_t>(l - 1)].size() != expected) {
      throw std::invalid_argument("alpha block " + std::to_string(l) + " must have " + std::to_string(expected) +
                                  " amplitudes");
    }
  }
  if (params.g == 0.0 || !std::isfinite(params.g)) {
    throw std::invalid_argument("coupling g must be a finite nonzero real number");
  }
  if (!params.drive.theta.empty() && params.drive.theta.size() != n) {
    throw std::invalid_argument("drive.theta must have one phase per subharmonic mode");
  }
  double sum_s = 0.0;
  double sum_p = 0.0;
  for (double w : params.ws) sum_s += w;
  for (double w : params.wp) sum_p += w;
  if (std::abs(sum_s - sum_p) > kResonanceTol) {
    throw std::invalid_argument("resonance condition violated: sum ws = " + std::to_string(sum_s) +
                                " but sum wp = " + std::to_string(sum_p));
  }
}

ModelParams zero_params(const ModeLayout& layout, std::vector<double> ws, std::vector<double> wp, double g) {
  ModelParams p;
  p.ws = std::move(ws);
  p.wp = std::move(wp);
  p.g = g;
  for (int l = 1; l <= 8; ++l) {
    p.alpha[static_cast<std::size_t>(l - 1)].assign(
        static_cast<std::size_t>(block_is_sub(l) ? layout.n_sub() : layout.n_pump()), Complex(0.0, 0.0));
  }
  p.drive.theta.assign(static_cast<std::size_t>(layout.n_sub()), 0.0);
  return p;
}

// ---------------------------------------------------------------------------
// ChannelSet

ChannelSet::ChannelSet(int n, int m, std::vector<Channel> channels)
    : n_(n), m_(m), channels_(std::move(channels)) {
  if (channels_.size() != static_cast<std::size_t>(4 * (n + m))) {
    throw std::invalid_argument("ChannelSet: expected 4(n+m) channels");
  }
}

int ChannelSet::block_length(int block, int n, int m) {
  if (block < 1 || block > 8) throw std::out_of_range("channel block must be in 1..8");
  return block_is_sub(block) ? n : m;
}

std::size_t ChannelSet::flat_index(int block, int local, int n, int m) {
  if (local < 0 || local >= block_length(block, n, m)) throw std::out_of_range("channel index outside its block");
  std::size_t offset = 0;
  for (int l = 1; l < block; ++l) offset += static_cast<std::size_t>(block_length(l, n, m));
  return offset + static_cast<std::size_t>(local);
}

std::pair<int, int> ChannelSet::block_position(std::size_t flat, int n, int m) {
  std::size_t offset = 0;
  for (int l = 1; l <= 8; ++l) {
    const auto len = static_cast<std::size_t>(block_length(l, n, m));
    if (flat < offset + len) return {l, static_cast<int>(flat - offset)};
    offset += len;
  }
  throw std::out_of_range("flat channel index " + std::to_string(flat) + " beyond 4(n+m)");
}

// ---------------------------------------------------------------------------
// Operators

OperatorMatrix interaction(const ModeLayout& layout) {
  const std::size_t dim = layout.dim();
  OperatorMatrix up = OperatorMatrix::identity(dim);    // prod a†_i prod b_j
  OperatorMatrix down = OperatorMatrix::identity(dim);  // prod a_i prod b†_j
  for (int i = 0; i < layout.n_sub(); ++i) {
    up = up * creation(layout, layout.sub_mode(i));
    down = down * annihilation(layout, layout.sub_mode(i));
  }
  for (int j = 0; j < layout.n_pump(); ++j) {
    up = up * annihilation(layout, layout.pump_mode(j));
    down = down * creation(layout, layout.pump_mode(j));
  }
  return up - down;
}

Eigen::VectorXd number_spectrum(const ModelParams& params, const ModeLayout& layout) {
  Eigen::VectorXd q(static_cast<Eigen::Index>(layout.dim()));
  for (std::size_t idx = 0; idx < layout.dim(); ++idx) {
    double value = 0.0;
    for (int i = 0; i < layout.n_sub(); ++i) {
      value += params.ws.at(static_cast<std::size_t>(i)) * layout.occupation(idx, layout.sub_mode(i));
    }
    for (int j = 0; j < layout.n_pump(); ++j) {
      value += params.wp.at(static_cast<std::size_t>(j)) * layout.occupation(idx, layout.pump_mode(j));
    }
    q[static_cast<Eigen::Index>(idx)] = value;
  }
  return q;
}

OperatorMatrix total_number(const ModelParams& params, const ModeLayout& layout) {
  return OperatorMatrix::diagonal(number_spectrum(params, layout));
}

OperatorMatrix hamiltonian_unchecked(const ModelParams& params, const ModeLayout& layout) {
  return total_number(params, layout) + interaction(layout).scaled(kI * (params.g / 2.0));
}

OperatorMatrix hamiltonian(const ModelParams& params, const ModeLayout& layout) {
  validate(params, layout);
  return hamiltonian_unchecked(params, layout);
}

ChannelSet flatten_channels(const ModelParams& params, const ModeLayout& layout) {
  validate(params, layout);
  std::vector<Channel> channels;
  channels.reserve(static_cast<std::size_t>(4 * layout.n_modes()));
  for (int block = 1; block <= 8; ++block) {
    const bool sub = block_is_sub(block);
    const bool raise = block >= 7;
    const auto& amps = params.alpha[static_cast<std::size_t>(block - 1)];
    for (int k = 0; k < static_cast<int>(amps.size()); ++k) {
      const int mode = sub ? layout.sub_mode(k) : layout.pump_mode(k);
      const OperatorMatrix ladder = raise ? creation(layout, mode) : annihilation(layout, mode);
      const Complex amp = amps[static_cast<std::size_t>(k)];
      channels.push_back({ladder.scaled(amp), role_of_block(block), block, k, mode, raise, amp});
    }
  }
  return ChannelSet(layout.n_sub(), layout.n_pump(), std::move(channels));
}

OperatorMatrix dissipator_sum(const ChannelSet& channels) {
  if (channels.size() == 0) throw std::invalid_argument("dissipator_sum: empty channel set");
  OperatorMatrix sum = OperatorMatrix::zero(channels[0].op.dim());
  for (const auto& ch : channels) sum = sum + ch.op.adjoint() * ch.op;
  return sum;
}

OperatorMatrix effective_K(const ModelParams& params, const ModeLayout& layout) {
  const OperatorMatrix h = hamiltonian(params, layout);
  const OperatorMatrix r = dissipator_sum(flatten_channels(params, layout));
  return h.scaled(-kI) - r.scaled(0.5);
}

Complex pump_input_amplitude(const ModelParams& params, int pump, double t) {
  const Complex lambda = params.drive.lambda;
  if (lambda == Complex(0.0, 0.0)) return {0.0, 0.0};
  const Complex alpha4 = params.alpha[3].at(static_cast<std::size_t>(pump));
  if (alpha4 == Complex(0.0, 0.0)) {
    throw std::invalid_argument("pump drive on b" + std::to_string(pump + 1) +
                                " needs a nonzero pump-input amplitude alpha4");
  }
  if (t < 0.0 || t >= params.drive.horizon) return {0.0, 0.0};
  const double w = params.wp.at(static_cast<std::size_t>(pump));
  return kI * lambda * std::exp(-kI * (w * t)) / std::conj(alpha4);
}

DriveShift drive_shift(const ModelParams& params, const ChannelSet& channels, double t) {
  if (t < 0.0) throw std::invalid_argument("drive_shift: negative time");
  if (channels.size() == 0) throw std::invalid_argument("drive_shift: empty channel set");
  const std::size_t dim = channels[0].op.dim();
  DriveShift shift;
  shift.channels.reserve(channels.size());
  shift.amplitudes.assign(channels.size(), Complex(0.0, 0.0));
  shift.h_corr = OperatorMatrix::zero(dim);
  for (std::size_t k = 0; k < channels.size(); ++k) {
    const Channel& ch = channels[k];
    if (ch.role != ChannelRole::pump_input) {
      shift.channels.push_back(ch.op);
      continue;
    }
    const Complex f = pump_input_amplitude(params, ch.local, t);
    shift.amplitudes[k] = f;
    if (f == Complex(0.0, 0.0)) {
      shift.channels.push_back(ch.op);
      continue;
    }
    shift.channels.push_back(ch.op + OperatorMatrix::identity(dim).scaled(f));
    shift.h_corr = shift.h_corr + (ch.op.scaled(std::conj(f)) - ch.op.adjoint().scaled(f)).scaled(kI * 0.5);
  }
  return shift;
}

HPCoefficients hp_coefficients(const ModelParams& params, const ModeLayout& layout) {
  const ChannelSet channels = flatten_channels(params, layout);
  HPCoefficients hp;
  hp.K = effective_K(params, layout);
  for (const auto& ch : channels) {
    hp.R.push_back(ch.op);
    hp.N.push_back(ch.op.adjoint().scaled(-1.0));
  }
  const auto d = static_cast<Eigen::Index>(channels.size());
  hp.S = Matrix::Identity(d, d);
  return hp;
}

// ---------------------------------------------------------------------------
// Measurement scheme

DetectorAssignment default_detectors(const ModeLayout& layout) {
  DetectorAssignment d;
  const int nm = layout.n_modes();
  for (int k = 0; k < nm; ++k) d.counting.push_back(k);
  for (int k = 0; k < layout.n_sub(); ++k) d.homodyne.push_back(nm + k);
  return d;
}

MeasurementScheme make_scheme(const ModelParams& params, const ModeLayout& layout,
                              const DetectorAssignment& detectors) {
  const int d = 4 * layout.n_modes();
  MeasurementScheme scheme;
  scheme.channel_count = d;
  for (int ch : detectors.counting) {
    if (ch < 0 || ch >= d) throw std::out_of_range("counting channel outside 0..4(n+m)-1");
    SchemeObservable obs;
    obs.label = "count[" + std::to_string(ch + 1) + "]";
    obs.projector.assign(static_cast<std::size_t>(d), 0.0);
    obs.projector[static_cast<std::size_t>(ch)] = 1.0;
    scheme.observables.push_back(std::move(obs));
  }
  for (int ch : detectors.homodyne) {
    if (ch < 0 || ch >= d) throw std::out_of_range("homodyne channel outside 0..4(n+m)-1");
    const auto [block, local] = ChannelSet::block_position(static_cast<std::size_t>(ch), layout.n_sub(),
                                                           layout.n_pump());
    const bool sub = block % 2 == 1;
    const double freq = sub ? params.ws.at(static_cast<std::size_t>(local)) : params.wp.at(static_cast<std::size_t>(local));
    double theta = 0.0;
    if (sub && static_cast<std::size_t>(local) < params.drive.theta.size()) {
      theta = params.drive.theta[static_cast<std::size_t>(local)];
    }
    SchemeObservable obs;
    obs.label = "homodyne[" + std::to_string(ch + 1) + "]";
    obs.projector.assign(static_cast<std::size_t>(d), 0.0);
    obs.h.push_back({ch, theta, freq});
    scheme.observables.push_back(std::move(obs));
  }
  return scheme;
}

CompatibilityReport measurement_compatibility_check(const MeasurementScheme& scheme, std::span<const double> times,
                                                    double tol) {
  const auto d = static_cast<Eigen::Index>(scheme.channel_count);
  const auto count = scheme.observables.size();
  CompatibilityReport report;
  auto fail = [&](const char* what, std::size_t i, std::size_t j, double value, double t) {
    if (value > report.worst) {
      report.worst = value;
      if (value > tol) {
        report.pass = false;
        report.violation = what;
        report.first = static_cast<int>(i);
        report.second = static_cast<int>(j);
        report.time = t;
      }
    }
  };
  for (double t : times) {
    std::vector<Vector> h(count, Vector::Zero(d));
    for (std::size_t k = 0; k < count; ++k) {
      for (const auto& c : scheme.observables[k].h) {
        // <h|z_c> = exp(i phi) means the component h_c is exp(-i phi)
        h[k][c.channel] += std::exp(-kI * (c.theta - c.frequency * t));
      }
    }
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < count; ++j) {
        fail("Im<h_i|h_j>", i, j, std::abs(h[i].dot(h[j]).imag()), t);
        double bh = 0.0;
        for (Eigen::Index c = 0; c < d; ++c) {
          bh = std::max(bh, std::abs(scheme.observables[i].projector[static_cast<std::size_t>(c)] * h[j][c]));
        }
        fail("B_i h_j", i, j, bh, t);
      }
    }
  }
  return report;
}

CompatibilityReport measurement_compatibility_check(const ModelParams& params, const ModeLayout& layout) {
  const MeasurementScheme scheme = make_scheme(params, layout, default_detectors(layout));
  const double t_end = std::isfinite(params.drive.horizon) ? std::min(params.drive.horizon, 10.0) : 10.0;
  std::vector<double> times;
  for (int i = 0; i * 0.1 <= t_end + 1e-12; ++i) times.push_back(i * 0.1);
  return measurement_compatibility_check(scheme, times);
}

}  // namespace mposim
