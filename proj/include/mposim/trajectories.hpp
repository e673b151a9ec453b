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
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mposim/dynamics.hpp"
#include "mposim/model.hpp"

namespace mposim {

enum class UnravelingMode { jump, homodyne };

const char* to_string(UnravelingMode mode);

/// Homodyne detector on one channel. The local oscillator has lab phase
/// theta - lo_frequency * t, so the detected operator is
/// e^{-i(theta - lo_frequency t)} L_k(t) in the lab frame.
struct HomodyneDetector {
  int channel;
  double theta = 0.0;
  double lo_frequency = 0.0;
};

/// Everything a trajectory needs: the generator (frame, channels, drive) and the
/// detector layout. Channels that are neither counted nor homodyned are unraveled
/// too, but their records are discarded.
struct UnravelingModel {
  Liouvillian generator;
  std::vector<int> counting;
  std::vector<HomodyneDetector> homodyne;
  /// In jump mode, count the homodyne-assigned channels instead of tracing them out.
  bool count_homodyne_in_jump_mode = false;
  /// Per channel: in the generator's frame L_k carries the phase e^{i frame_frequency t}.
  std::vector<double> frame_frequency;
  Eigen::VectorXd edge_mask;
  double leak_tol = 1e-6;
};

UnravelingModel model_unraveling(const ModelParams& params, const ModeLayout& layout,
                                 const DetectorAssignment& detectors, FrameKind frame = FrameKind::rotating);

struct ChannelJumps {
  int channel;
  std::vector<double> times;
};

struct ChannelSignal {
  int channel;
  std::vector<std::pair<double, double>> increments;  // (end time of the bin, dY over the bin)
};

struct MeasurementRecord {
  std::uint64_t seed = 0;
  double dt = 0.0;
  double t_final = 0.0;
  std::vector<ChannelJumps> counting;
  std::vector<ChannelSignal> homodyne;

  /// Number of monitored channels (counting then homodyne), the length of kappa
  /// in characteristic_functional.
  std::size_t monitored() const { return counting.size() + homodyne.size(); }
};

enum class StateMethod {
  automatic,  // density matrix when unmonitored channels exist and D <= density_max_dim
  pure,
  density,
};

struct TrajectoryOptions {
  double t_final = 1.0;
  double dt = 1e-2;
  /// Times at which observables, rates and signals are sampled; multiples of dt.
  std::vector<double> sample_times;
  std::vector<OperatorMatrix> observables;  // lab frame
  /// Homodyne increments are summed over this many steps per stored record entry.
  int record_stride = 1;
  StateMethod method = StateMethod::automatic;
  std::size_t density_max_dim = 64;
};

struct TrajectoryResult {
  MeasurementRecord record;
  QuantumState final_state;                  // lab frame
  std::vector<std::vector<double>> samples;  // [observable][sample] (real parts)
  std::vector<std::vector<double>> rates;    // [counting channel][sample]: ||L_k psi||^2
  std::vector<std::vector<double>> signals;  // [homodyne channel][sample]: <c + c†>
  std::vector<std::vector<double>> counts;   // [counting channel][sample]: jumps so far
  std::size_t steps = 0;
};

/// Photon-counting unraveling (first-order Monte Carlo wave function).
TrajectoryResult jump_unraveling(const UnravelingModel& model, const QuantumState& psi0, const TrajectoryOptions& opts,
                                 std::uint64_t seed);

/// Diffusive unraveling of the homodyne channels (Euler-Maruyama) with jumps on counting channels.
TrajectoryResult homodyne_unraveling(const UnravelingModel& model, const QuantumState& psi0,
                                     const TrajectoryOptions& opts, std::uint64_t seed);

TrajectoryResult unravel(UnravelingMode mode, const UnravelingModel& model, const QuantumState& psi0,
                         const TrajectoryOptions& opts, std::uint64_t seed);

struct SeriesStats {
  std::string label;
  std::vector<double> mean;
  std::vector<double> se;  // NaN when n_traj < 2
};

struct EnsembleStats {
  std::size_t n_traj = 0;
  bool se_defined = false;
  std::vector<double> times;
  std::vector<SeriesStats> observables;
  std::vector<SeriesStats> rates;
  std::vector<SeriesStats> signals;
  std::vector<SeriesStats> counts;
  std::vector<MeasurementRecord> records;  // index order, filled when keep_records
};

struct EnsembleOptions {
  std::size_t n_traj = 100;
  std::uint64_t seed = 0;
  UnravelingMode mode = UnravelingMode::jump;
  TrajectoryOptions trajectory;
  std::vector<std::string> observable_labels;
  bool keep_records = true;
  /// Worker threads; 0 reads MPO_SIM_THREADS, falling back to the hardware count.
  unsigned threads = 0;
};

/// Runs n_traj trajectories with seeds derive_seed(seed, i). Results do not depend
/// on the thread count. Failures are rethrown naming the trajectory index.
EnsembleStats ensemble_average(const UnravelingModel& model, const QuantumState& psi0, const EnsembleOptions& opts);

/// Worker count from MPO_SIM_THREADS (>= 1), else the hardware concurrency.
unsigned default_thread_count();

struct FunctionalEstimate {
  Complex value;
  double se;  // standard error of the complex mean (NaN for a single record)
};

/// Monte-Carlo estimate of E[exp(i sum_l sum_k kappa_k dX_k(t_{l-1}, t_l))], where the
/// increments are jump counts (counting channels) and summed dY (homodyne channels).
FunctionalEstimate characteristic_functional(const std::vector<MeasurementRecord>& records,
                                             const std::vector<double>& kappa, const std::vector<double>& partition);

/// One JSON line: {"traj":i,"seed":s,"jumps":{"ch":[...]},"homodyne":{"ch":[[t,dY],...]}}.
/// Channel keys are 1-based flat channel indices.
void write_record_jsonl(std::ostream& out, std::size_t traj, const MeasurementRecord& record);

}  // namespace mposim
