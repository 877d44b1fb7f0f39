// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>

namespace hdit {

/// Philox4x32-10 block function (Salmon et al., Random123). Pure: same
/// (counter, key) always yields the same four words on every platform.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Purposes get disjoint stream ids so e.g. toggling dropout never shifts the
/// noise draws of a training step.
enum class StreamPurpose : std::uint32_t {
  init = 1,
  data = 2,
  sigma = 3,
  noise = 4,
  dropout = 5,
  cond_dropout = 6,
  sample = 7,
  test = 15,
};

/// Counter-based random stream. State is (seed, stream id, counter); the
/// counter advances one Philox block per four 32-bit outputs.
///
/// Layout: key = seed (low word, high word); counter words =
/// (block low, block high, stream low, stream high).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  /// Stream keyed by (purpose, step) so a run resumed at `step` draws the
  /// same values as an uninterrupted one.
  static RngStream for_step(std::uint64_t seed, StreamPurpose purpose, std::uint64_t step) {
    return {seed, (static_cast<std::uint64_t>(purpose) << 40) | (step & ((1ull << 40) - 1))};
  }

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform in the open interval (0, 1), 53-bit resolution.
  double uniform();
  /// Standard normal via Box-Muller on two uniforms; the second value of each
  /// pair is cached.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t block() const { return block_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace hdit
