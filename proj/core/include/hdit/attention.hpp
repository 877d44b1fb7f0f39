// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "hdit/tensor.hpp"

namespace hdit {

/// Which keys each query may attend to, as CSR lists over token indices.
/// A dense pattern means every query sees every key.
struct AttentionPattern {
  std::int64_t tokens = 0;
  bool dense = false;
  std::vector<std::int64_t> offsets;  // size tokens + 1 when sparse
  std::vector<std::int32_t> keys;

  std::int64_t key_count(std::int64_t query) const {
    return dense ? tokens : offsets[query + 1] - offsets[query];
  }
  /// Sorted key list of one query.
  std::vector<std::int32_t> keys_of(std::int64_t query) const;

  static AttentionPattern global(std::int64_t tokens);
  /// Border-saturating kernel x kernel windows on an h x w grid (row-major
  /// tokens). The window is centred on the query and slides inward at the
  /// edges, so each query sees min(kernel,h) * min(kernel,w) keys.
  static AttentionPattern neighborhood(std::int64_t h, std::int64_t w, std::int64_t kernel);
  /// Non-overlapping window x window groups. With `shift` > 0 the grouping is
  /// taken on cyclically shifted coordinates: the token at (r, c) falls in
  /// the window of ((r - shift) mod h, (c - shift) mod w), which is what
  /// rolling the map by -shift, partitioning, and rolling back produces.
  static AttentionPattern windows(std::int64_t h, std::int64_t w, std::int64_t window, std::int64_t shift);
};

/// Integer (row, col) coordinates of each token.
struct TokenPositions {
  std::vector<std::int64_t> row;
  std::vector<std::int64_t> col;
  static TokenPositions grid(std::int64_t h, std::int64_t w);
};

/// Axial rotary embedding table for one head width. Of the head channels the
/// first half is rotated: angle j in [0, dh/4) rotates the pair (j, j + dh/4);
/// the first ceil(dh/8) angles follow the row coordinate and the rest the
/// column coordinate, with frequencies base^(-m / count) per axis. Channels
/// [dh/2, dh) pass through unchanged.
struct RopeTable {
  std::int64_t head_dim = 0;
  std::int64_t angles = 0;
  std::int64_t tokens = 0;
  std::vector<double> cos;  // [tokens, angles]
  std::vector<double> sin;

  static RopeTable build(const TokenPositions& positions, std::int64_t head_dim, double base = 10000.0);
};

/// Rotates q or k laid out as [B, n, heads, dh].
template <typename T>
Tensor<T> apply_axial_rope(const Tensor<T>& x, const RopeTable& table);

/// Softmax attention with plain dot-product logits over the pattern's key
/// lists. q, k, v: [B, n, heads, dh]; result has the same shape. Any logit
/// scaling is the caller's business.
template <typename T>
Tensor<T> pattern_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                            const AttentionPattern& pattern);

/// Dense attention weights [B, heads, n, n] (zero outside the pattern) for the
/// same logits pattern_attention would use. Inspection only; not recorded.
template <typename T>
std::vector<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k, const AttentionPattern& pattern);

}  // namespace hdit
