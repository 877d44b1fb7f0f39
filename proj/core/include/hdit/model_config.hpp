// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdit/nn.hpp"

namespace hdit {

struct LevelConfig {
  std::int64_t width = 0;
  /// Blocks per side for outer levels; total blocks for the innermost level.
  int depth = 0;
  nn::AttentionSpec attention;
  double dropout = 0.0;

  friend bool operator==(const LevelConfig&, const LevelConfig&) = default;
};

/// Levels run from the patch grid (index 0) inward; the last level is the core.
struct ModelConfig {
  std::int64_t in_channels = 3;
  std::int64_t patch_size = 4;
  std::vector<LevelConfig> levels;
  std::int64_t head_dim = 64;
  int mapping_depth = 1;
  std::int64_t mapping_width = 768;
  /// 0 means unconditional.
  std::int64_t num_classes = 0;
  nn::FeedForwardKind feedforward = nn::FeedForwardKind::geglu;
  /// Primary training resolution (square).
  std::int64_t resolution = 128;
  /// Allows a core grid other than 16x16 at the primary resolution.
  bool free_core_size = false;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

  int level_count() const { return static_cast<int>(levels.size()); }
  std::int64_t heads(int level) const { return levels[level].width / head_dim; }
  /// Spatial extent of the token grid at `level` for a res x res input.
  std::int64_t grid_side(int level, std::int64_t res) const;
  /// Required divisor of the input side: p * 2^(levels - 1).
  std::int64_t input_multiple() const;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
};

namespace presets {
/// Two levels (neighborhood 7 + global core), widths [384, 768], depths [2, 11].
ModelConfig imagenet128();
/// ablation step A: the same hourglass with global attention and a GELU MLP.
ModelConfig ablation_global();
/// Five levels (three neighborhood + two global) at 1024^2, unconditional.
ModelConfig ffhq1024();
/// Three levels, widths [384, 768, 1536], depths [2, 2, 16].
ModelConfig imagenet256();
/// Desk-scale two-level model for 32x32 toy data.
ModelConfig smoke();
/// Looks up one of the names above ("imagenet128", "ablation-a", "ffhq1024",
/// "imagenet256", "smoke"); throws ConfigError otherwise.
ModelConfig by_name(const std::string& name);
}  // namespace presets

/// Re-targets `cfg` to `target_res` = resolution * 2^k by prepending k outer
/// levels copying the outermost level's width and attention, depth 2 per side.
/// Added levels get fresh parameters when built.
ModelConfig adapt_resolution(const ModelConfig& cfg, std::int64_t target_res);

std::string to_string(nn::AttentionKind kind);
nn::AttentionKind parse_attention_kind(const std::string& text);
std::string to_string(nn::FeedForwardKind kind);
nn::FeedForwardKind parse_feedforward_kind(const std::string& text);

}  // namespace hdit
