// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/model_config.hpp"

#include "hdit/error.hpp"

namespace hdit {

namespace {

LevelConfig level(std::int64_t width, int depth, nn::AttentionKind kind, std::int64_t size = 7, double dropout = 0.0) {
  return LevelConfig{width, depth, nn::AttentionSpec{kind, size}, dropout};
}

std::string at_level(int l) { return "level " + std::to_string(l) + ": "; }

}  // namespace

std::int64_t ModelConfig::grid_side(int level, std::int64_t res) const {
  return res / patch_size >> level;
}

std::int64_t ModelConfig::input_multiple() const {
  return patch_size << (level_count() - 1);
}

void ModelConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be positive");
  if (patch_size < 1) throw ConfigError("patch_size must be positive");
  if (levels.empty()) throw ConfigError("at least one level is required");
  if (head_dim < 4 || head_dim % 4 != 0) throw ConfigError("head_dim must be a positive multiple of 4");
  if (mapping_depth < 0) throw ConfigError("mapping_depth must be non-negative");
  if (mapping_width < 1) throw ConfigError("mapping_width must be positive");
  if (num_classes < 0) throw ConfigError("num_classes must be non-negative");
  for (int l = 0; l < level_count(); ++l) {
    const auto& lv = levels[l];
    if (lv.width < 1 || lv.width % head_dim != 0) {
      throw ConfigError(at_level(l) + "width " + std::to_string(lv.width) + " is not a positive multiple of head_dim " +
                        std::to_string(head_dim));
    }
    if (lv.depth < 0) throw ConfigError(at_level(l) + "depth must be non-negative");
    if (lv.dropout < 0.0 || lv.dropout >= 1.0) throw ConfigError(at_level(l) + "dropout must be in [0, 1)");
    if (lv.attention.kind != nn::AttentionKind::global) {
      if (lv.attention.size < 1) throw ConfigError(at_level(l) + "attention size must be positive");
      if (lv.attention.kind == nn::AttentionKind::neighborhood && lv.attention.size % 2 == 0) {
        throw ConfigError(at_level(l) + "neighborhood kernel must be odd");
      }
    }
    if (l > 0 && lv.width < levels[l - 1].width) {
      throw ConfigError(at_level(l) + "widths must not decrease toward the core");
    }
  }
  if (resolution < 1 || resolution % input_multiple() != 0) {
    throw ConfigError("resolution " + std::to_string(resolution) + " is not divisible by patch_size * 2^(levels-1) = " +
                      std::to_string(input_multiple()));
  }
  const std::int64_t core = grid_side(level_count() - 1, resolution);
  if (core != 16 && !free_core_size) {
    throw ConfigError("innermost level runs at " + std::to_string(core) + "x" + std::to_string(core) +
                      " tokens; expected 16x16 (set free_core_size to override)");
  }
  for (int l = 0; l < level_count(); ++l) {
    const auto& spec = levels[l].attention;
    if (spec.kind == nn::AttentionKind::swin && grid_side(l, resolution) % spec.size != 0) {
      throw ConfigError(at_level(l) + "swin window does not divide the token grid");
    }
  }
}

namespace presets {

ModelConfig imagenet128() {
  ModelConfig c;
  c.patch_size = 4;
  c.levels = {level(384, 2, nn::AttentionKind::neighborhood), level(768, 11, nn::AttentionKind::global)};
  c.mapping_depth = 1;
  c.mapping_width = 768;
  c.num_classes = 1000;
  c.resolution = 128;
  return c;
}

ModelConfig ablation_global() {
  ModelConfig c = imagenet128();
  c.levels[0].attention = nn::AttentionSpec{nn::AttentionKind::global, 0};
  c.feedforward = nn::FeedForwardKind::gelu;
  return c;
}

ModelConfig ffhq1024() {
  ModelConfig c;
  c.patch_size = 4;
  c.levels = {level(128, 2, nn::AttentionKind::neighborhood), level(256, 2, nn::AttentionKind::neighborhood),
              level(384, 2, nn::AttentionKind::neighborhood), level(768, 2, nn::AttentionKind::global),
              level(1024, 2, nn::AttentionKind::global, 0, 0.1)};
  c.mapping_depth = 2;
  c.mapping_width = 768;
  c.num_classes = 0;
  c.resolution = 1024;
  // Two global levels put the core at 16x16 only after four halvings of a
  // 256x256 patch grid; the 32x32 global level sits one step further out.
  return c;
}

ModelConfig imagenet256() {
  ModelConfig c;
  c.patch_size = 4;
  c.levels = {level(384, 2, nn::AttentionKind::neighborhood), level(768, 2, nn::AttentionKind::neighborhood),
              level(1536, 16, nn::AttentionKind::global)};
  c.mapping_depth = 2;
  c.mapping_width = 768;
  c.num_classes = 1000;
  c.resolution = 256;
  return c;
}

ModelConfig smoke() {
  ModelConfig c;
  c.patch_size = 2;
  c.levels = {level(64, 1, nn::AttentionKind::neighborhood), level(128, 2, nn::AttentionKind::global)};
  c.head_dim = 32;
  c.mapping_depth = 1;
  c.mapping_width = 128;
  c.num_classes = 2;
  c.resolution = 32;
  c.free_core_size = true;
  return c;
}

ModelConfig by_name(const std::string& name) {
  if (name == "imagenet128" || name == "ablation-e") return imagenet128();
  if (name == "ablation-a") return ablation_global();
  if (name == "ffhq1024") return ffhq1024();
  if (name == "imagenet256") return imagenet256();
  if (name == "smoke") return smoke();
  throw ConfigError("unknown model preset '" + name + "'");
}

}  // namespace presets

ModelConfig adapt_resolution(const ModelConfig& cfg, std::int64_t target_res) {
  if (target_res < cfg.resolution || target_res % cfg.resolution != 0) {
    throw ConfigError("target resolution must be a power-of-two multiple of " + std::to_string(cfg.resolution));
  }
  std::int64_t ratio = target_res / cfg.resolution;
  if ((ratio & (ratio - 1)) != 0) {
    throw ConfigError("target resolution must be a power-of-two multiple of " + std::to_string(cfg.resolution));
  }
  ModelConfig out = cfg;
  const LevelConfig outer = cfg.levels.front();
  while (ratio > 1) {
    LevelConfig added = outer;
    added.depth = 2;
    added.dropout = 0.0;
    out.levels.insert(out.levels.begin(), added);
    ratio /= 2;
  }
  out.resolution = target_res;
  return out;
}

std::string to_string(nn::AttentionKind kind) {
  switch (kind) {
    case nn::AttentionKind::global: return "global";
    case nn::AttentionKind::neighborhood: return "neighborhood";
    case nn::AttentionKind::swin: return "swin";
  }
  return "?";
}

nn::AttentionKind parse_attention_kind(const std::string& text) {
  if (text == "global") return nn::AttentionKind::global;
  if (text == "neighborhood") return nn::AttentionKind::neighborhood;
  if (text == "swin") return nn::AttentionKind::swin;
  throw ConfigError("unknown attention kind '" + text + "'");
}

std::string to_string(nn::FeedForwardKind kind) {
  return kind == nn::FeedForwardKind::geglu ? "geglu" : "gelu";
}

nn::FeedForwardKind parse_feedforward_kind(const std::string& text) {
  if (text == "geglu") return nn::FeedForwardKind::geglu;
  if (text == "gelu") return nn::FeedForwardKind::gelu;
  throw ConfigError("unknown feedforward kind '" + text + "'");
}

}  // namespace hdit
