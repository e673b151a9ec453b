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

#include <array>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mposim/fock.hpp"

namespace mposim {

/// Absolute tolerance on |sum ws - sum wp| for the resonance condition.
inline constexpr double kResonanceTol = 1e-9;

struct PumpDrive {
  Complex lambda{0.0, 0.0};
  /// Drive is on for 0 <= t < horizon.
  double horizon = std::numeric_limits<double>::infinity();
  /// Homodyne local-oscillator phases, one per subharmonic mode.
  std::vector<double> theta;
};

/// Physical parameters of the multi-photon model.
///
/// alpha[l-1] holds the amplitudes of channel block l = 1..8. Odd blocks
/// (photocount, homodyne, loss, thermal on a) have n entries, even blocks have m.
struct ModelParams {
  std::vector<double> ws;
  std::vector<double> wp;
  double g = 0.0;
  std::array<std::vector<Complex>, 8> alpha;
  PumpDrive drive;
};

/// Throws std::invalid_argument on size mismatches, g == 0 or a resonance violation.
void validate(const ModelParams& params, const ModeLayout& layout);

/// ModelParams for `layout` with every amplitude and the drive set to zero.
ModelParams zero_params(const ModeLayout& layout, std::vector<double> ws, std::vector<double> wp, double g);

enum class ChannelRole {
  photocount_sub,
  photocount_pump,
  homodyne,
  pump_input,
  loss_a,
  loss_b,
  thermal_a,
  thermal_b,
};

const char* to_string(ChannelRole role);

struct Channel {
  OperatorMatrix op;  // amplitude * ladder operator
  ChannelRole role;
  int block;  // 1..8
  int local;  // 0-based position inside the block
  int mode;   // 0-based mode the ladder operator acts on
  bool creation;
  Complex amplitude;
};

/// The 4(n+m) channel operators R_1..R_d, concatenated block by block.
class ChannelSet {
 public:
  ChannelSet() = default;
  ChannelSet(int n, int m, std::vector<Channel> channels);

  std::size_t size() const { return channels_.size(); }
  const Channel& operator[](std::size_t i) const { return channels_.at(i); }
  const std::vector<Channel>& channels() const { return channels_; }
  auto begin() const { return channels_.begin(); }
  auto end() const { return channels_.end(); }

  static int block_length(int block, int n, int m);
  /// Flat 0-based index of channel `local` in `block`.
  static std::size_t flat_index(int block, int local, int n, int m);
  /// Inverse of flat_index: (block, local).
  static std::pair<int, int> block_position(std::size_t flat, int n, int m);

 private:
  int n_ = 0;
  int m_ = 0;
  std::vector<Channel> channels_;
};

/// prod a†_i prod b_j - prod a_i prod b†_j (anti-Hermitian).
OperatorMatrix interaction(const ModeLayout& layout);

/// Eigenvalue q(s,p) = sum ws_i s_i + sum wp_j p_j of N = N_s + N_p per basis index.
Eigen::VectorXd number_spectrum(const ModelParams& params, const ModeLayout& layout);

/// N = N_s + N_p (frequency weighted).
OperatorMatrix total_number(const ModelParams& params, const ModeLayout& layout);

/// H = N_s + N_p + (i g / 2) I. Validates the parameters first.
OperatorMatrix hamiltonian(const ModelParams& params, const ModeLayout& layout);

/// Same assembly without validation; used by the off-resonance control check.
OperatorMatrix hamiltonian_unchecked(const ModelParams& params, const ModeLayout& layout);

ChannelSet flatten_channels(const ModelParams& params, const ModeLayout& layout);

/// R = sum_i R_i† R_i.
OperatorMatrix dissipator_sum(const ChannelSet& channels);

/// K = -i H - R / 2.
OperatorMatrix effective_K(const ModelParams& params, const ModeLayout& layout);

/// Coherent input amplitude f_j(t) for pump-input channel j (0-based pump index):
/// i lambda exp(-i wp_j t) / conj(alpha4_j) on 0 <= t < horizon, else 0.
Complex pump_input_amplitude(const ModelParams& params, int pump, double t);

struct DriveShift {
  std::vector<OperatorMatrix> channels;  // R_k + f_k(t) 1, unchanged off block 4
  std::vector<Complex> amplitudes;       // f_k(t) per flat channel (0 off block 4)
  OperatorMatrix h_corr;                 // (i/2) sum_k (conj(f_k) R_k - f_k R_k†)
};

/// Weyl shift of the channels for the coherent pump input at time t.
/// Throws if lambda != 0 while some alpha4_j == 0.
DriveShift drive_shift(const ModelParams& params, const ChannelSet& channels, double t);

/// Coefficients of the Hudson-Parthasarathy equation for this model:
/// S = 1, F = 0, N_j = -R_j†, K = -iH - R/2.
struct HPCoefficients {
  OperatorMatrix K;
  std::vector<OperatorMatrix> R;
  std::vector<OperatorMatrix> N;
  Matrix S;  // d x d scalar gauge matrix
};

HPCoefficients hp_coefficients(const ModelParams& params, const ModeLayout& layout);

/// Flat (0-based) channel indices assigned to photon counters and homodyne detectors.
struct DetectorAssignment {
  std::vector<int> counting;
  std::vector<int> homodyne;
};

/// Counters on channels 0..n+m-1, homodyne detectors on n+m..2n+m-1.
DetectorAssignment default_detectors(const ModeLayout& layout);

/// One observable X(k,t) of the measurement scheme, written in the z-basis of C^d.
struct SchemeObservable {
  std::string label;
  std::vector<double> projector;  // eigenvalues B_ki, all zero for homodyne observables
  struct Component {
    int channel;
    double theta;
    double frequency;  // <h_k(t)|z_channel> = exp(i (theta - frequency t))
  };
  std::vector<Component> h;
};

struct MeasurementScheme {
  int channel_count = 0;
  std::vector<SchemeObservable> observables;
};

MeasurementScheme make_scheme(const ModelParams& params, const ModeLayout& layout, const DetectorAssignment& detectors);

struct CompatibilityReport {
  bool pass = true;
  std::string violation;  // "B_i h_j" or "Im<h_i|h_j>"
  int first = -1;         // observable indices of the violating pair
  int second = -1;
  double worst = 0.0;
  double time = 0.0;
};

/// Checks Im<h_i(t)|h_j(t)> = 0 and B_i h_j(t) = 0 for all pairs at the given times.
CompatibilityReport measurement_compatibility_check(const MeasurementScheme& scheme, std::span<const double> times,
                                                    double tol = 1e-12);

/// The built-in scheme evaluated on t = 0, 0.1, ..., horizon (or 0..10 without a horizon).
CompatibilityReport measurement_compatibility_check(const ModelParams& params, const ModeLayout& layout);

}  // namespace mposim
