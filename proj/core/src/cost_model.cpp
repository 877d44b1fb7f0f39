// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/cost_model.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "hdit/error.hpp"

namespace hdit::cost {

namespace {

constexpr std::int64_t kFourierFeatures = 2 * nn::kFourierFrequencies;

std::int64_t mixing_flops(const nn::AttentionSpec& spec, std::int64_t h, std::int64_t w, std::int64_t d) {
  const std::int64_t n = h * w;
  switch (spec.kind) {
    case nn::AttentionKind::global: return 2 * n * n * d;
    case nn::AttentionKind::neighborhood:
      return 2 * n * std::min(spec.size, h) * std::min(spec.size, w) * d;
    case nn::AttentionKind::swin: return 2 * n * std::min(spec.size, h) * std::min(spec.size, w) * d;
  }
  return 0;
}

std::int64_t block_parameters(const ModelConfig& cfg, std::int64_t d) {
  const std::int64_t ffn = cfg.feedforward == nn::FeedForwardKind::geglu ? 9 * d * d : 8 * d * d;
  return 2 * cfg.mapping_width * d + 4 * d * d + d / cfg.head_dim + ffn;
}

void finish(CostReport& r) {
  r.total = r.attention_projections + r.attention_mixing + r.feedforward + r.resampling;
}

}  // namespace

CostReport count_dit(std::int64_t width, int depth, std::int64_t patch, std::int64_t res, std::int64_t channels) {
  if (patch < 1 || res % patch != 0) throw ConfigError("patch size must divide the resolution");
  if (width < 1 || depth < 0) throw ConfigError("invalid transformer shape");
  const std::int64_t side = res / patch, n = side * side, d = width, pc = patch * patch * channels;
  CostReport r;
  r.resolution = res;
  LevelCost lc{n, d, depth, depth * 4 * n * d * d, depth * 2 * n * n * d, depth * 8 * n * d * d};
  r.levels.push_back(lc);
  r.attention_projections = lc.attention_projections;
  r.attention_mixing = lc.attention_mixing;
  r.feedforward = lc.feedforward;
  r.resampling = 2 * n * pc * d;
  finish(r);
  const std::int64_t block = 18 * d * d + 15 * d;
  const std::int64_t embed = pc * d + d;
  const std::int64_t timestep = 256 * d + d + d * d + d;
  const std::int64_t classes = 1001 * d;
  const std::int64_t head = 2 * d * d + 2 * d + d * 2 * pc + 2 * pc;
  r.parameters = depth * block + embed + timestep + classes + head;
  return r;
}

CostReport count_hdit(const ModelConfig& cfg, std::int64_t res) {
  ModelConfig at = cfg;
  at.resolution = res;
  at.free_core_size = true;
  at.validate();
  const int nlev = cfg.level_count();
  const std::int64_t pc = cfg.patch_size * cfg.patch_size * cfg.in_channels;
  CostReport r;
  r.resolution = res;
  for (int l = 0; l < nlev; ++l) {
    const auto& lv = cfg.levels[l];
    const std::int64_t side = cfg.grid_side(l, res), n = side * side, d = lv.width;
    const std::int64_t blocks = l + 1 < nlev ? 2 * lv.depth : lv.depth;
    const std::int64_t ffn = cfg.feedforward == nn::FeedForwardKind::geglu ? 9 : 8;
    LevelCost lc{n, d, blocks, blocks * 4 * n * d * d, blocks * mixing_flops(lv.attention, side, side, d),
                 blocks * ffn * n * d * d};
    r.attention_projections += lc.attention_projections;
    r.attention_mixing += lc.attention_mixing;
    r.feedforward += lc.feedforward;
    if (l + 1 < nlev) {
      const std::int64_t inner = n / 4, next = cfg.levels[l + 1].width;
      r.resampling += 2 * inner * 4 * d * next;
    }
    r.levels.push_back(lc);
  }
  const std::int64_t n0 = r.levels.front().tokens, d0 = cfg.levels.front().width;
  r.resampling += 2 * n0 * pc * d0;
  finish(r);
  r.parameters = count_parameters(cfg);
  return r;
}

std::int64_t count_parameters(const ModelConfig& cfg) {
  const std::int64_t w = cfg.mapping_width;
  std::int64_t total = kFourierFeatures * w + 2 * w + cfg.mapping_depth * (w + 9 * w * w);
  if (cfg.num_classes > 0) total += (cfg.num_classes + 1) * w;
  const std::int64_t pc = cfg.patch_size * cfg.patch_size * cfg.in_channels;
  const std::int64_t d0 = cfg.levels.front().width;
  total += pc * d0 + d0 + d0 * pc;
  const int nlev = cfg.level_count();
  for (int l = 0; l < nlev; ++l) {
    const std::int64_t d = cfg.levels[l].width;
    if (l + 1 < nlev) {
      total += 2 * cfg.levels[l].depth * block_parameters(cfg, d);
      total += 2 * 4 * d * cfg.levels[l + 1].width + 1;
    } else {
      total += cfg.levels[l].depth * block_parameters(cfg, d);
    }
  }
  return total;
}

std::vector<SweepRow> scaling_sweep(const ModelConfig& base, const std::vector<std::int64_t>& resolutions) {
  std::vector<SweepRow> rows;
  for (const auto res : resolutions) {
    const double hdit = count_hdit(adapt_resolution(base, res), res).gflop();
    const double dit = count_dit(768, 12, 4, res).gflop();
    rows.push_back({res, hdit, 100.0 * (1.0 - hdit / dit)});
  }
  return rows;
}

std::vector<SweepRow> dit_sweep(const std::vector<std::int64_t>& resolutions) {
  std::vector<SweepRow> rows;
  for (const auto res : resolutions) rows.push_back({res, count_dit(768, 12, 4, res).gflop(), 0.0});
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "x,y,r\n" << std::setprecision(10);
  for (const auto& row : rows) out << row.resolution << ',' << row.gflop << ',' << row.reduction << '\n';
  return out.str();
}

AsymptoticReport asymptotic_check(const ModelConfig& base, int doublings) {
  if (doublings < 3) throw ConfigError("asymptotic check needs at least 3 doublings");
  AsymptoticReport rep;
  CostReport last;
  for (int k = 0; k <= doublings; ++k) {
    const std::int64_t res = base.resolution << k;
    last = count_hdit(adapt_resolution(base, res), res);
    rep.resolutions.push_back(res);
    rep.hdit_gflop.push_back(last.gflop());
    rep.dit_gflop.push_back(count_dit(768, 12, 4, res).gflop());
  }
  const auto n = rep.resolutions.size();
  rep.hdit_ratio = rep.hdit_gflop[n - 1] / rep.hdit_gflop[n - 2];
  rep.dit_ratio = rep.dit_gflop[n - 1] / rep.dit_gflop[n - 2];
  for (std::size_t l = 0; l + 1 < last.levels.size(); ++l) {
    rep.local_attention_total += static_cast<double>(last.levels[l].attention_mixing);
  }
  rep.outermost_attention = static_cast<double>(last.levels.front().attention_mixing);
  rep.ratio_within_bounds = rep.hdit_ratio >= 4.0 && rep.hdit_ratio <= 4.8;
  rep.geometric_bound_holds = rep.local_attention_total <= 4.0 / 3.0 * rep.outermost_attention;
  return rep;
}

}  // namespace hdit::cost
