// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/model.hpp"

#include "hdit/error.hpp"

namespace hdit {

template <typename T>
HDiTModel<T>::HDiTModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  RngStream init = RngStream::for_step(seed, StreamPurpose::init, 0);
  const auto cond = config_.mapping_width;
  const int nlev = config_.level_count();

  mapping_ = nn::MappingNetwork<T>(cond, config_.mapping_depth, config_.num_classes, init);
  embed_ = nn::PatchEmbed<T>(config_.patch_size, config_.in_channels, config_.levels[0].width, init);
  levels_.resize(static_cast<std::size_t>(nlev));
  for (int l = 0; l < nlev; ++l) {
    const auto& lc = config_.levels[l];
    auto make_stack = [&](int n) {
      std::vector<nn::HDiTBlock<T>> stack;
      for (int i = 0; i < n; ++i) {
        stack.emplace_back(lc.width, config_.head_dim, cond, config_.feedforward, lc.dropout, init);
      }
      return stack;
    };
    Level& level = levels_[l];
    if (l + 1 < nlev) {
      const auto next = config_.levels[l + 1].width;
      level.encoder = make_stack(lc.depth);
      level.merge = nn::TokenMerge<T>(lc.width, next, init);
      level.split = nn::TokenSplit<T>(next, lc.width, init);
    }
    level.decoder = make_stack(lc.depth);
  }
  out_norm_ = nn::RMSNorm<T>(config_.levels[0].width);
  head_ = nn::Linear<T>(config_.levels[0].width, config_.patch_size * config_.patch_size * config_.in_channels,
                        false, init);
}

template <typename T>
const nn::TokenGeometry& HDiTModel<T>::geometry(int level, std::int64_t h, std::int64_t w, int block_index) const {
  const auto& spec = config_.levels[level].attention;
  const int phase = spec.kind == nn::AttentionKind::swin ? block_index % 2 : 0;
  const auto key = std::make_tuple(level, h, w, phase);
  std::lock_guard lock(geometry_mutex_);
  auto it = geometry_.find(key);
  if (it == geometry_.end()) {
    auto geo = std::make_unique<nn::TokenGeometry>(nn::TokenGeometry::build(h, w, spec, config_.head_dim, phase));
    it = geometry_.emplace(key, std::move(geo)).first;
  }
  return *it->second;
}

template <typename T>
Tensor<T> HDiTModel<T>::run_stack(const std::vector<nn::HDiTBlock<T>>& stack, const Tensor<T>& grid,
                                  const Tensor<T>& cond, int level, const ForwardOptions& options) const {
  if (stack.empty() || options.skip_blocks) return grid;
  const auto b = grid.extent(0), h = grid.extent(1), w = grid.extent(2), d = grid.extent(3);
  const nn::ForwardContext ctx{options.dropout_rng};
  Tensor<T> tokens = reshape(grid, {b, h * w, d});
  for (std::size_t i = 0; i < stack.size(); ++i) {
    tokens = stack[i](tokens, cond, geometry(level, h, w, static_cast<int>(i)), ctx);
  }
  return reshape(tokens, {b, h, w, d});
}

template <typename T>
Tensor<T> HDiTModel<T>::forward(const Tensor<T>& x, std::span<const double> sigma,
                                std::span<const std::int64_t> class_ids, const ForwardOptions& options) const {
  if (x.rank() != 4 || x.extent(3) != config_.in_channels) {
    throw ShapeError("model input must be [B, H, W, " + std::to_string(config_.in_channels) + "], got " +
                     shape_str(x.shape()));
  }
  const auto multiple = config_.input_multiple();
  if (x.extent(1) % multiple != 0 || x.extent(2) % multiple != 0) {
    throw ShapeError("image extent " + std::to_string(x.extent(1)) + "x" + std::to_string(x.extent(2)) +
                     " is not divisible by patch_size * 2^(levels-1) = " + std::to_string(multiple));
  }
  if (static_cast<std::int64_t>(sigma.size()) != x.extent(0)) throw ShapeError("need one sigma per image");

  const Tensor<T> cond = mapping_(sigma, class_ids);
  const int nlev = config_.level_count();
  std::vector<Tensor<T>> skips;
  Tensor<T> h = embed_(x);
  for (int l = 0; l + 1 < nlev; ++l) {
    h = run_stack(levels_[l].encoder, h, cond, l, options);
    skips.push_back(h);
    h = levels_[l].merge(h);
  }
  h = run_stack(levels_[nlev - 1].decoder, h, cond, nlev - 1, options);
  for (int l = nlev - 2; l >= 0; --l) {
    h = levels_[l].skip(skips[l], levels_[l].split(h));
    h = run_stack(levels_[l].decoder, h, cond, l, options);
  }
  return pixel_shuffle(head_(out_norm_(h)), config_.patch_size);
}

template <typename T>
ParamList<T> HDiTModel<T>::parameters() const {
  ParamList<T> params;
  mapping_.collect(params, "mapping");
  embed_.collect(params, "embed");
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const std::string p = "levels." + std::to_string(l);
    const Level& level = levels_[l];
    for (std::size_t i = 0; i < level.encoder.size(); ++i) {
      level.encoder[i].collect(params, p + ".encoder." + std::to_string(i));
    }
    if (l + 1 < levels_.size()) {
      level.merge.collect(params, p + ".merge");
      level.split.collect(params, p + ".split");
      level.skip.collect(params, p + ".skip");
    }
    for (std::size_t i = 0; i < level.decoder.size(); ++i) {
      level.decoder[i].collect(params, p + (l + 1 < levels_.size() ? ".decoder." : ".core.") + std::to_string(i));
    }
  }
  out_norm_.collect(params, "out_norm");
  head_.collect(params, "head");
  return params;
}

template <typename T>
std::int64_t HDiTModel<T>::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

template class HDiTModel<float>;
template class HDiTModel<double>;

}  // namespace hdit
