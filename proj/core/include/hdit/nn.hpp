// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hdit/attention.hpp"
#include "hdit/ops.hpp"
#include "hdit/rng.hpp"
#include "hdit/tensor.hpp"

namespace hdit::nn {

inline constexpr double kNormEps = 1e-6;
/// Attention logits are cos(q, k) / tau. tau starts at 0.1 (a logit
/// multiplier of 10) and is held at or above 0.01 by the optimizer.
inline constexpr double kTauInit = 0.1;
inline constexpr double kTauFloor = 0.01;
inline constexpr double kRopeBase = 10000.0;
inline constexpr int kFourierFrequencies = 64;

enum class AttentionKind { global, neighborhood, swin };

struct AttentionSpec {
  AttentionKind kind = AttentionKind::global;
  /// Neighborhood kernel or Swin window; ignored for global attention.
  std::int64_t size = 7;

  friend bool operator==(const AttentionSpec&, const AttentionSpec&) = default;
};

enum class FeedForwardKind { geglu, gelu };

/// Per-forward switches. Dropout is active only when `dropout_rng` is set.
struct ForwardContext {
  RngStream* dropout_rng = nullptr;
};

/// y = x / sqrt(mean(x^2) + eps) * scale over the last axis. `scale` must
/// broadcast against x.
template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& scale, double eps = kNormEps);

/// f * skip + (1 - f) * upsampled, with f a one-element tensor.
template <typename T>
Tensor<T> lerp_merge(const Tensor<T>& skip, const Tensor<T>& upsampled, const Tensor<T>& f);

/// Cosine-similarity attention. q, k, v: [B, n, heads, dh]; tau: [heads].
/// q and k rows are L2-normalized (eps 1e-6 under the root), optionally
/// rotated by `rope`, and the logits divided by the head's tau.
template <typename T>
Tensor<T> cosine_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& tau,
                           const AttentionPattern& pattern, const RopeTable* rope = nullptr);

/// Dense attention weights [B, heads, n, n] that cosine_attention would use.
template <typename T>
std::vector<T> cosine_attention_weights(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& tau,
                                        const AttentionPattern& pattern, const RopeTable* rope = nullptr);

// Grid conveniences over [B, h*w, heads, dh] tensors with plain dot-product logits.
template <typename T>
Tensor<T> global_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);
template <typename T>
Tensor<T> neighborhood_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::int64_t h,
                                 std::int64_t w, std::int64_t kernel);
/// Window attention via roll(-window/2), partition, roll back when shifted.
template <typename T>
Tensor<T> swin_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::int64_t h,
                         std::int64_t w, std::int64_t window, bool shifted);

/// Cyclic shift of a [B, h, w, C] map by (dr, dc).
template <typename T>
Tensor<T> roll2d(const Tensor<T>& x, std::int64_t dr, std::int64_t dc);

/// Everything a block needs about the token grid it runs on.
struct TokenGeometry {
  std::int64_t h = 0;
  std::int64_t w = 0;
  TokenPositions positions;
  AttentionPattern pattern;
  RopeTable rope;

  /// Swin blocks at odd `block_index` use windows shifted by size/2.
  static TokenGeometry build(std::int64_t h, std::int64_t w, const AttentionSpec& spec, std::int64_t head_dim,
                             int block_index = 0);
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::int64_t in_features, std::int64_t out_features, bool zero_init, RngStream& init);

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight); }
  void collect(ParamList<T>& params, const std::string& prefix) const;

  Tensor<T> weight;  // [out, in]
  bool zero_init = false;
};

template <typename T>
class RMSNorm {
 public:
  RMSNorm() = default;
  explicit RMSNorm(std::int64_t width);

  Tensor<T> operator()(const Tensor<T>& x) const { return rms_norm(x, scale); }
  void collect(ParamList<T>& params, const std::string& prefix) const;

  Tensor<T> scale;
};

/// RMS normalization whose per-channel scale is 1 + W * cond. W starts at
/// zero so the layer begins as a plain RMSNorm. No additive shift.
template <typename T>
class AdaRMSNorm {
 public:
  AdaRMSNorm() = default;
  AdaRMSNorm(std::int64_t width, std::int64_t cond_width, RngStream& init);

  /// x: [B, ..., width]; cond: [B, cond_width].
  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& cond) const;
  void collect(ParamList<T>& params, const std::string& prefix) const;

  Linear<T> cond_to_scale;
};

/// Pre-norm feedforward residual branch. GEGLU: down(gelu(gate x) * (value x)),
/// hidden 3*d. GELU: down(gelu(up x)), hidden 4*d. `down` is zero-initialized.
template <typename T>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(FeedForwardKind kind, std::int64_t width, std::int64_t cond_width, double dropout, RngStream& init);

  /// Returns the branch output only; the caller adds the residual.
  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& cond, const ForwardContext& ctx) const;
  void collect(ParamList<T>& params, const std::string& prefix) const;

  FeedForwardKind kind = FeedForwardKind::geglu;
  AdaRMSNorm<T> norm;
  Linear<T> up_value;  // geglu value path, or the single up projection for gelu
  Linear<T> up_gate;   // geglu only
  Linear<T> down;
  double dropout_p = 0.0;
};

/// Pre-norm multi-head cosine-similarity self-attention with axial RoPE.
template <typename T>
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(std::int64_t width, std::int64_t head_dim, std::int64_t cond_width, RngStream& init);

  /// x: [B, n, width]. Returns the branch output.
  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& cond, const TokenGeometry& geo) const;
  void collect(ParamList<T>& params, const std::string& prefix) const;

  std::int64_t heads = 0;
  std::int64_t head_dim = 0;
  AdaRMSNorm<T> norm;
  Linear<T> qkv;
  Tensor<T> tau;  // [heads]
  Linear<T> out;
};

/// x + attn(x); x + ffn(x). No output gates.
template <typename T>
class HDiTBlock {
 public:
  HDiTBlock() = default;
  HDiTBlock(std::int64_t width, std::int64_t head_dim, std::int64_t cond_width, FeedForwardKind ffn, double dropout,
            RngStream& init);

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& cond, const TokenGeometry& geo,
                       const ForwardContext& ctx = {}) const;
  void collect(ParamList<T>& params, const std::string& prefix) const;

  SelfAttention<T> attn;
  FeedForward<T> ffn;
};

/// (sigma, class) -> conditioning vector. sigma enters as Fourier features of
/// c_noise = ln(sigma) / 4 (64 log-spaced frequencies from 0.5 to 64, cos and
/// sin), projected to the mapping width and summed with a class embedding
/// row. Row `num_classes` is the unconditional embedding used for
/// conditioning dropout; class id -1 selects it.
template <typename T>
class MappingNetwork {
 public:
  MappingNetwork() = default;
  MappingNetwork(std::int64_t width, int depth, std::int64_t num_classes, RngStream& init);

  /// Returns [B, width].
  Tensor<T> operator()(std::span<const double> sigma, std::span<const std::int64_t> class_ids) const;
  void collect(ParamList<T>& params, const std::string& prefix) const;

  static std::vector<double> fourier_frequencies();

  struct Block {
    RMSNorm<T> norm;
    Linear<T> up_value;
    Linear<T> up_gate;
    Linear<T> down;
  };

  std::int64_t width = 0;
  std::int64_t num_classes = 0;
  Linear<T> in_proj;
  Tensor<T> class_table;  // [num_classes + 1, width], undefined if unconditional
  RMSNorm<T> in_norm;
  std::vector<Block> blocks;
  RMSNorm<T> out_norm;
};

/// 2x2 pixel-unshuffle then projection 4*d_in -> d_out.
template <typename T>
class TokenMerge {
 public:
  TokenMerge() = default;
  TokenMerge(std::int64_t in_width, std::int64_t out_width, RngStream& init);
  /// x: [B, h, w, d_in] -> [B, h/2, w/2, d_out].
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(ParamList<T>& params, const std::string& prefix) const;
  Linear<T> proj;
};

/// Projection d_in -> 4*d_out then 2x2 pixel-shuffle.
template <typename T>
class TokenSplit {
 public:
  TokenSplit() = default;
  TokenSplit(std::int64_t in_width, std::int64_t out_width, RngStream& init);
  /// x: [B, h, w, d_in] -> [B, 2h, 2w, d_out].
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(ParamList<T>& params, const std::string& prefix) const;
  Linear<T> proj;
};

/// Learnable lerp between skip and upsampled streams; f starts at 0.5.
template <typename T>
class LerpSkip {
 public:
  LerpSkip();
  Tensor<T> operator()(const Tensor<T>& skip, const Tensor<T>& upsampled) const {
    return lerp_merge(skip, upsampled, f);
  }
  void collect(ParamList<T>& params, const std::string& prefix) const;
  Tensor<T> f;
};

/// Non-overlapping p x p patches flattened then projected to the level-0 width.
template <typename T>
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(std::int64_t patch, std::int64_t channels, std::int64_t width, RngStream& init);
  /// img: [B, H, W, C] -> [B, H/p, W/p, width].
  Tensor<T> operator()(const Tensor<T>& img) const;
  void collect(ParamList<T>& params, const std::string& prefix) const;
  std::int64_t patch = 1;
  Linear<T> proj;
};

}  // namespace hdit::nn
