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
#include <cmath>
#include <cstdint>
#include <numbers>

namespace mposim {

/// Philox4x32-10 block function (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Seed of trajectory `traj` in an ensemble keyed by `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t traj) {
  const auto out = Philox4x32::block(
      {static_cast<std::uint32_t>(traj), static_cast<std::uint32_t>(traj >> 32), 0x74726a63u, 0u},
      {static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32)});
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

/// Random stream for one (seed, step, stream) triple. Draws are a pure function
/// of that triple and the draw position, so trajectories can be replayed step by step
/// in any order.
class StepRng {
 public:
  StepRng(std::uint64_t seed, std::uint64_t step, std::uint32_t stream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        step_lo_(static_cast<std::uint32_t>(step)),
        step_hi_(static_cast<std::uint32_t>(step >> 32)),
        stream_(stream) {}

  std::uint32_t next_u32() {
    if (pos_ == 4) {
      buf_ = Philox4x32::block({block_++, step_lo_, step_hi_, stream_}, key_);
      pos_ = 0;
    }
    return buf_[pos_++];
  }

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() {
    const std::uint64_t hi = next_u32() >> 5;
    const std::uint64_t lo = next_u32() >> 6;
    return (static_cast<double>((hi << 26) | lo) + 0.5) * 0x1p-53;
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double phi = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

 private:
  Philox4x32::Key key_;
  std::uint32_t step_lo_;
  std::uint32_t step_hi_;
  std::uint32_t stream_;
  std::uint32_t block_ = 0;
  Philox4x32::Counter buf_{};
  int pos_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mposim
