// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdit/model_config.hpp"

namespace hdit::cost {

// One multiply-accumulate counts as one FLOP. Softmax, normalization,
// elementwise work and the per-sample conditioning path are not counted.

struct LevelCost {
  std::int64_t tokens = 0;
  std::int64_t width = 0;
  std::int64_t blocks = 0;
  std::int64_t attention_projections = 0;
  std::int64_t attention_mixing = 0;
  std::int64_t feedforward = 0;
};

struct CostReport {
  std::int64_t resolution = 0;
  std::int64_t attention_projections = 0;
  std::int64_t attention_mixing = 0;
  std::int64_t feedforward = 0;
  /// Patch embedding, output head, token merges and splits.
  std::int64_t resampling = 0;
  std::int64_t total = 0;
  std::int64_t parameters = 0;
  std::vector<LevelCost> levels;

  double gflop() const { return static_cast<double>(total) * 1e-9; }
};

/// Isotropic transformer with a GELU MLP (hidden 4d), patch embed and head.
/// Parameters follow the usual adaLN-zero layout with biases, a 256-wide
/// timestep embedding, a 1001-row class table and a learned-variance head.
CostReport count_dit(std::int64_t width, int depth, std::int64_t patch, std::int64_t res, std::int64_t channels = 3);

/// The hourglass as configured (no resolution adaptation).
CostReport count_hdit(const ModelConfig& cfg, std::int64_t res);

/// Parameter total derived from the configuration alone.
std::int64_t count_parameters(const ModelConfig& cfg);

struct SweepRow {
  std::int64_t resolution = 0;
  double gflop = 0;
  /// Percent cost reduction versus the reference transformer.
  double reduction = 0;
};

/// HDiT (adapted to each resolution) against DiT-B/4.
std::vector<SweepRow> scaling_sweep(const ModelConfig& base, const std::vector<std::int64_t>& resolutions);
/// DiT-B/4 rows; reduction is 0.
std::vector<SweepRow> dit_sweep(const std::vector<std::int64_t>& resolutions);
/// Header `x,y,r`, one row per resolution.
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct AsymptoticReport {
  std::vector<std::int64_t> resolutions;
  std::vector<double> hdit_gflop;
  std::vector<double> dit_gflop;
  /// Cost ratios for the last doubling.
  double hdit_ratio = 0;
  double dit_ratio = 0;
  /// Local-attention mixing FLOPs summed over all non-core levels, and the
  /// outermost level's alone, at the largest resolution.
  double local_attention_total = 0;
  double outermost_attention = 0;
  bool ratio_within_bounds = false;  // hdit_ratio in [4, 4.8]
  bool geometric_bound_holds = false;  // total <= 4/3 outermost
};

/// Evaluates base.resolution * 2^k for k = 0..doublings (at least 3).
AsymptoticReport asymptotic_check(const ModelConfig& base, int doublings);

}  // namespace hdit::cost
