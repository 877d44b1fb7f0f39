// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include "hdit/model_config.hpp"
#include "hdit/nn.hpp"

namespace hdit {

struct ForwardOptions {
  /// Enables dropout when set.
  RngStream* dropout_rng = nullptr;
  /// Bypasses every transformer block (encoder, core and decoder).
  bool skip_blocks = false;
};

/// Hourglass transformer returning the raw network output F(x, sigma, class).
/// Input and output are channel-last images [B, H, W, C].
template <typename T>
class HDiTModel {
 public:
  /// Parameters are drawn from the init stream of `seed`.
  HDiTModel(const ModelConfig& config, std::uint64_t seed);

  /// `class_ids` is either empty (all unconditional) or one id per image;
  /// -1 selects the unconditional embedding.
  Tensor<T> forward(const Tensor<T>& x, std::span<const double> sigma, std::span<const std::int64_t> class_ids,
                    const ForwardOptions& options = {}) const;

  const ModelConfig& config() const { return config_; }
  /// Named parameters in a fixed order.
  ParamList<T> parameters() const;
  std::int64_t parameter_count() const;

 private:
  struct Level {
    std::vector<nn::HDiTBlock<T>> encoder;  // empty for the core
    std::vector<nn::HDiTBlock<T>> decoder;  // holds the core stack for the innermost level
    nn::TokenMerge<T> merge;                // into the next level
    nn::TokenSplit<T> split;                // from the next level
    nn::LerpSkip<T> skip;
  };

  Tensor<T> run_stack(const std::vector<nn::HDiTBlock<T>>& stack, const Tensor<T>& grid, const Tensor<T>& cond,
                      int level, const ForwardOptions& options) const;
  const nn::TokenGeometry& geometry(int level, std::int64_t h, std::int64_t w, int block_index) const;

  ModelConfig config_;
  nn::MappingNetwork<T> mapping_;
  nn::PatchEmbed<T> embed_;
  std::vector<Level> levels_;
  nn::RMSNorm<T> out_norm_;
  nn::Linear<T> head_;

  mutable std::mutex geometry_mutex_;
  mutable std::map<std::tuple<int, std::int64_t, std::int64_t, int>, std::unique_ptr<nn::TokenGeometry>> geometry_;
};

}  // namespace hdit
