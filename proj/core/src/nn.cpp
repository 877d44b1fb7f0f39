// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/nn.hpp"

#include <cmath>

#include "hdit/error.hpp"

namespace hdit::nn {

namespace {

template <typename T>
Tensor<T> normal_tensor(const Shape& shape, double stddev, RngStream& rng) {
  std::vector<T> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = static_cast<T>(rng.normal() * stddev);
  return Tensor<T>(shape, std::move(values), true);
}

template <typename T>
Tensor<T> l2_normalize_last(const Tensor<T>& x) {
  return l2_normalize(x, kNormEps);
}

template <typename T>
Tensor<T> scale_by_inverse_tau(const Tensor<T>& q, const Tensor<T>& tau) {
  return div(q, reshape(tau, {tau.numel(), 1}));
}

}  // namespace

template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& scale, double eps) {
  return hdit::rms_norm(x, scale, eps);
}

template <typename T>
Tensor<T> lerp_merge(const Tensor<T>& skip, const Tensor<T>& upsampled, const Tensor<T>& f) {
  if (skip.shape() != upsampled.shape()) {
    throw ShapeError("lerp_merge shapes differ: " + shape_str(skip.shape()) + " vs " + shape_str(upsampled.shape()));
  }
  if (f.numel() != 1) throw ShapeError("lerp coefficient must have one element");
  // f*skip + (1-f)*up written as up + f*(skip - up) would round differently at f=1.
  const Tensor<T> one_minus_f = add_scalar(neg(f), T(1));
  return add(mul(skip, f), mul(upsampled, one_minus_f));
}

template <typename T>
Tensor<T> cosine_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& tau,
                           const AttentionPattern& pattern, const RopeTable* rope) {
  if (q.rank() != 4 || tau.numel() != q.shape()[2]) {
    throw ShapeError("cosine_attention expects q [B,n,heads,dh] and tau [heads]");
  }
  Tensor<T> qn = l2_normalize_last(q);
  Tensor<T> kn = l2_normalize_last(k);
  if (rope) {
    qn = apply_axial_rope(qn, *rope);
    kn = apply_axial_rope(kn, *rope);
  }
  return pattern_attention(scale_by_inverse_tau(qn, tau), kn, v, pattern);
}

template <typename T>
std::vector<T> cosine_attention_weights(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& tau,
                                        const AttentionPattern& pattern, const RopeTable* rope) {
  NoGradGuard no_grad;
  Tensor<T> qn = l2_normalize_last(q);
  Tensor<T> kn = l2_normalize_last(k);
  if (rope) {
    qn = apply_axial_rope(qn, *rope);
    kn = apply_axial_rope(kn, *rope);
  }
  return attention_weights(scale_by_inverse_tau(qn, tau), kn, pattern);
}

template <typename T>
Tensor<T> global_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  return pattern_attention(q, k, v, AttentionPattern::global(q.extent(1)));
}

template <typename T>
Tensor<T> neighborhood_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::int64_t h,
                                 std::int64_t w, std::int64_t kernel) {
  return pattern_attention(q, k, v, AttentionPattern::neighborhood(h, w, kernel));
}

template <typename T>
Tensor<T> roll2d(const Tensor<T>& x, std::int64_t dr, std::int64_t dc) {
  if (x.rank() != 4) throw ShapeError("roll2d expects [B,h,w,C]");
  return roll(roll(x, 1, dr), 2, dc);
}

template <typename T>
Tensor<T> swin_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::int64_t h,
                         std::int64_t w, std::int64_t window, bool shifted) {
  const auto pattern = AttentionPattern::windows(h, w, window, 0);
  if (!shifted) return pattern_attention(q, k, v, pattern);
  const Shape heads_shape = q.shape();
  const std::int64_t b = heads_shape[0], c = heads_shape[2] * heads_shape[3];
  const std::int64_t s = window / 2;
  auto to_grid = [&](const Tensor<T>& t) { return roll2d(reshape(t, {b, h, w, c}), -s, -s); };
  auto from_grid = [&](const Tensor<T>& t) { return reshape(t, heads_shape); };
  const Tensor<T> out = pattern_attention(from_grid(to_grid(q)), from_grid(to_grid(k)), from_grid(to_grid(v)), pattern);
  return reshape(roll2d(reshape(out, {b, h, w, c}), s, s), heads_shape);
}

TokenGeometry TokenGeometry::build(std::int64_t h, std::int64_t w, const AttentionSpec& spec, std::int64_t head_dim,
                                   int block_index) {
  TokenGeometry g;
  g.h = h;
  g.w = w;
  g.positions = TokenPositions::grid(h, w);
  switch (spec.kind) {
    case AttentionKind::global:
      g.pattern = AttentionPattern::global(h * w);
      break;
    case AttentionKind::neighborhood:
      g.pattern = AttentionPattern::neighborhood(h, w, spec.size);
      break;
    case AttentionKind::swin:
      g.pattern = AttentionPattern::windows(h, w, spec.size, block_index % 2 == 1 ? spec.size / 2 : 0);
      break;
  }
  g.rope = RopeTable::build(g.positions, head_dim, kRopeBase);
  return g;
}

template <typename T>
Linear<T>::Linear(std::int64_t in_features, std::int64_t out_features, bool zero, RngStream& init)
    : zero_init(zero) {
  if (in_features < 1 || out_features < 1) throw ConfigError("linear layer extents must be positive");
  if (zero) {
    weight = Tensor<T>::zeros({out_features, in_features}, true);
  } else {
    weight = normal_tensor<T>({out_features, in_features}, 1.0 / std::sqrt(static_cast<double>(in_features)), init);
  }
}

template <typename T>
void Linear<T>::collect(ParamList<T>& params, const std::string& prefix) const {
  params.push_back({prefix + ".weight", weight, true});
}

template <typename T>
RMSNorm<T>::RMSNorm(std::int64_t width) : scale(Tensor<T>::ones({width}, true)) {}

template <typename T>
void RMSNorm<T>::collect(ParamList<T>& params, const std::string& prefix) const {
  params.push_back({prefix + ".scale", scale, false});
}

template <typename T>
AdaRMSNorm<T>::AdaRMSNorm(std::int64_t width, std::int64_t cond_width, RngStream& init)
    : cond_to_scale(cond_width, width, true, init) {}

template <typename T>
Tensor<T> AdaRMSNorm<T>::operator()(const Tensor<T>& x, const Tensor<T>& cond) const {
  if (cond.rank() != 2 || cond.extent(0) != x.extent(0)) {
    throw ShapeError("conditioning " + shape_str(cond.shape()) + " does not match batch of " + shape_str(x.shape()));
  }
  return rms_norm(x, add_scalar(cond_to_scale(cond), T(1)));
}

template <typename T>
void AdaRMSNorm<T>::collect(ParamList<T>& params, const std::string& prefix) const {
  cond_to_scale.collect(params, prefix + ".cond_to_scale");
}

template <typename T>
FeedForward<T>::FeedForward(FeedForwardKind k, std::int64_t width, std::int64_t cond_width, double dropout,
                            RngStream& init)
    : kind(k), norm(width, cond_width, init), dropout_p(dropout) {
  const std::int64_t hidden = kind == FeedForwardKind::geglu ? 3 * width : 4 * width;
  up_value = Linear<T>(width, hidden, false, init);
  if (kind == FeedForwardKind::geglu) up_gate = Linear<T>(width, hidden, false, init);
  down = Linear<T>(hidden, width, true, init);
}

template <typename T>
Tensor<T> FeedForward<T>::operator()(const Tensor<T>& x, const Tensor<T>& cond, const ForwardContext& ctx) const {
  const Tensor<T> xn = norm(x, cond);
  Tensor<T> hidden = kind == FeedForwardKind::geglu ? geglu(up_gate(xn), up_value(xn)) : gelu(up_value(xn));
  if (ctx.dropout_rng && dropout_p > 0.0) hidden = dropout(hidden, dropout_p, *ctx.dropout_rng);
  return down(hidden);
}

template <typename T>
void FeedForward<T>::collect(ParamList<T>& params, const std::string& prefix) const {
  norm.collect(params, prefix + ".norm");
  up_value.collect(params, prefix + (kind == FeedForwardKind::geglu ? ".up_value" : ".up"));
  if (kind == FeedForwardKind::geglu) up_gate.collect(params, prefix + ".up_gate");
  down.collect(params, prefix + ".down");
}

template <typename T>
SelfAttention<T>::SelfAttention(std::int64_t width, std::int64_t hd, std::int64_t cond_width, RngStream& init)
    : heads(width / hd), head_dim(hd), norm(width, cond_width, init) {
  if (hd < 1 || width % hd != 0) {
    throw ConfigError("width " + std::to_string(width) + " is not a multiple of head dim " + std::to_string(hd));
  }
  qkv = Linear<T>(width, 3 * width, false, init);
  tau = Tensor<T>::full({heads}, static_cast<T>(kTauInit), true);
  out = Linear<T>(width, width, true, init);
}

template <typename T>
Tensor<T> SelfAttention<T>::operator()(const Tensor<T>& x, const Tensor<T>& cond, const TokenGeometry& geo) const {
  if (x.rank() != 3) throw ShapeError("attention block expects [B, n, d], got " + shape_str(x.shape()));
  const std::int64_t b = x.shape()[0], n = x.shape()[1], d = x.shape()[2];
  if (n != geo.h * geo.w) throw ShapeError("token count does not match geometry");
  const Tensor<T> packed = reshape(qkv(norm(x, cond)), {b, n, 3, heads, head_dim});
  const auto parts = split(packed, {1, 1, 1}, 2);
  const Shape heads_shape{b, n, heads, head_dim};
  const Tensor<T> mixed = cosine_attention(reshape(parts[0], heads_shape), reshape(parts[1], heads_shape),
                                           reshape(parts[2], heads_shape), tau, geo.pattern, &geo.rope);
  return out(reshape(mixed, {b, n, d}));
}

template <typename T>
void SelfAttention<T>::collect(ParamList<T>& params, const std::string& prefix) const {
  norm.collect(params, prefix + ".norm");
  qkv.collect(params, prefix + ".qkv");
  params.push_back({prefix + ".tau", tau, false});
  out.collect(params, prefix + ".out");
}

template <typename T>
HDiTBlock<T>::HDiTBlock(std::int64_t width, std::int64_t head_dim, std::int64_t cond_width, FeedForwardKind kind,
                        double dropout, RngStream& init)
    : attn(width, head_dim, cond_width, init), ffn(kind, width, cond_width, dropout, init) {}

template <typename T>
Tensor<T> HDiTBlock<T>::operator()(const Tensor<T>& x, const Tensor<T>& cond, const TokenGeometry& geo,
                                   const ForwardContext& ctx) const {
  const Tensor<T> h = add(x, attn(x, cond, geo));
  return add(h, ffn(h, cond, ctx));
}

template <typename T>
void HDiTBlock<T>::collect(ParamList<T>& params, const std::string& prefix) const {
  attn.collect(params, prefix + ".attn");
  ffn.collect(params, prefix + ".ffn");
}

template <typename T>
std::vector<double> MappingNetwork<T>::fourier_frequencies() {
  std::vector<double> f(kFourierFrequencies);
  const double lo = std::log(0.5), hi = std::log(64.0);
  for (int j = 0; j < kFourierFrequencies; ++j) f[j] = std::exp(lo + (hi - lo) * j / (kFourierFrequencies - 1));
  return f;
}

template <typename T>
MappingNetwork<T>::MappingNetwork(std::int64_t w, int depth, std::int64_t classes, RngStream& init)
    : width(w), num_classes(classes) {
  if (w < 1 || depth < 0 || classes < 0) throw ConfigError("invalid mapping network shape");
  in_proj = Linear<T>(2 * kFourierFrequencies, width, false, init);
  if (num_classes > 0) class_table = normal_tensor<T>({num_classes + 1, width}, 1.0, init);
  in_norm = RMSNorm<T>(width);
  for (int i = 0; i < depth; ++i) {
    Block blk;
    blk.norm = RMSNorm<T>(width);
    blk.up_value = Linear<T>(width, 3 * width, false, init);
    blk.up_gate = Linear<T>(width, 3 * width, false, init);
    blk.down = Linear<T>(3 * width, width, true, init);
    blocks.push_back(std::move(blk));
  }
  out_norm = RMSNorm<T>(width);
}

template <typename T>
Tensor<T> MappingNetwork<T>::operator()(std::span<const double> sigma, std::span<const std::int64_t> class_ids) const {
  const auto batch = static_cast<std::int64_t>(sigma.size());
  if (!class_ids.empty() && static_cast<std::int64_t>(class_ids.size()) != batch) {
    throw ShapeError("class id count does not match the sigma batch");
  }
  static const std::vector<double> freqs = fourier_frequencies();
  std::vector<T> features(static_cast<std::size_t>(batch * 2 * kFourierFrequencies));
  for (std::int64_t b = 0; b < batch; ++b) {
    if (!(sigma[b] > 0.0)) throw ConfigError("sigma must be positive");
    const double c_noise = std::log(sigma[b]) / 4.0;
    for (int j = 0; j < kFourierFrequencies; ++j) {
      features[b * 2 * kFourierFrequencies + j] = static_cast<T>(std::cos(freqs[j] * c_noise));
      features[b * 2 * kFourierFrequencies + kFourierFrequencies + j] = static_cast<T>(std::sin(freqs[j] * c_noise));
    }
  }
  Tensor<T> emb = in_proj(Tensor<T>({batch, 2 * kFourierFrequencies}, std::move(features)));
  if (num_classes > 0) {
    std::vector<std::int64_t> rows(static_cast<std::size_t>(batch), num_classes);
    for (std::size_t i = 0; i < class_ids.size(); ++i) {
      const auto id = class_ids[i];
      if (id < -1 || id >= num_classes) {
        throw ConfigError("class id " + std::to_string(id) + " out of range [0, " + std::to_string(num_classes) + ")");
      }
      rows[i] = id < 0 ? num_classes : id;
    }
    emb = add(emb, gather_rows(class_table, rows));
  } else {
    for (const auto id : class_ids) {
      if (id != -1) throw ConfigError("unconditional model got class id " + std::to_string(id));
    }
  }
  Tensor<T> x = in_norm(emb);
  for (const auto& blk : blocks) {
    const Tensor<T> xn = blk.norm(x);
    x = add(x, blk.down(geglu(blk.up_gate(xn), blk.up_value(xn))));
  }
  return out_norm(x);
}

template <typename T>
void MappingNetwork<T>::collect(ParamList<T>& params, const std::string& prefix) const {
  in_proj.collect(params, prefix + ".in_proj");
  if (class_table.defined()) params.push_back({prefix + ".class_table", class_table, false});
  in_norm.collect(params, prefix + ".in_norm");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = prefix + ".blocks." + std::to_string(i);
    blocks[i].norm.collect(params, p + ".norm");
    blocks[i].up_value.collect(params, p + ".up_value");
    blocks[i].up_gate.collect(params, p + ".up_gate");
    blocks[i].down.collect(params, p + ".down");
  }
  out_norm.collect(params, prefix + ".out_norm");
}

template <typename T>
TokenMerge<T>::TokenMerge(std::int64_t in_width, std::int64_t out_width, RngStream& init)
    : proj(4 * in_width, out_width, false, init) {}

template <typename T>
Tensor<T> TokenMerge<T>::operator()(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.shape()[1] % 2 != 0 || x.shape()[2] % 2 != 0) {
    throw ShapeError("token merge needs [B, h, w, d] with even h and w, got " + shape_str(x.shape()));
  }
  return proj(pixel_unshuffle(x, 2));
}

template <typename T>
void TokenMerge<T>::collect(ParamList<T>& params, const std::string& prefix) const {
  proj.collect(params, prefix + ".proj");
}

template <typename T>
TokenSplit<T>::TokenSplit(std::int64_t in_width, std::int64_t out_width, RngStream& init)
    : proj(in_width, 4 * out_width, false, init) {}

template <typename T>
Tensor<T> TokenSplit<T>::operator()(const Tensor<T>& x) const {
  if (x.rank() != 4) throw ShapeError("token split needs [B, h, w, d], got " + shape_str(x.shape()));
  return pixel_shuffle(proj(x), 2);
}

template <typename T>
void TokenSplit<T>::collect(ParamList<T>& params, const std::string& prefix) const {
  proj.collect(params, prefix + ".proj");
}

template <typename T>
LerpSkip<T>::LerpSkip() : f(Tensor<T>::full({1}, T(0.5), true)) {}

template <typename T>
void LerpSkip<T>::collect(ParamList<T>& params, const std::string& prefix) const {
  params.push_back({prefix + ".f", f, false});
}

template <typename T>
PatchEmbed<T>::PatchEmbed(std::int64_t p, std::int64_t channels, std::int64_t width, RngStream& init)
    : patch(p), proj(p * p * channels, width, false, init) {}

template <typename T>
Tensor<T> PatchEmbed<T>::operator()(const Tensor<T>& img) const {
  if (img.rank() != 4 || img.shape()[1] % patch != 0 || img.shape()[2] % patch != 0) {
    throw ShapeError("patch size " + std::to_string(patch) + " does not divide image " + shape_str(img.shape()));
  }
  return proj(pixel_unshuffle(img, patch));
}

template <typename T>
void PatchEmbed<T>::collect(ParamList<T>& params, const std::string& prefix) const {
  proj.collect(params, prefix + ".proj");
}

#define HDIT_INSTANTIATE_NN(T)                                                                                     \
  template Tensor<T> rms_norm(const Tensor<T>&, const Tensor<T>&, double);                                         \
  template Tensor<T> lerp_merge(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> cosine_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                      const AttentionPattern&, const RopeTable*);                                  \
  template std::vector<T> cosine_attention_weights(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                                   const AttentionPattern&, const RopeTable*);                     \
  template Tensor<T> global_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> neighborhood_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::int64_t,    \
                                            std::int64_t, std::int64_t);                                           \
  template Tensor<T> swin_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::int64_t,            \
                                    std::int64_t, std::int64_t, bool);                                             \
  template Tensor<T> roll2d(const Tensor<T>&, std::int64_t, std::int64_t);                                         \
  template class Linear<T>;                                                                                        \
  template class RMSNorm<T>;                                                                                       \
  template class AdaRMSNorm<T>;                                                                                    \
  template class FeedForward<T>;                                                                                   \
  template class SelfAttention<T>;                                                                                 \
  template class HDiTBlock<T>;                                                                                     \
  template class MappingNetwork<T>;                                                                                \
  template class TokenMerge<T>;                                                                                    \
  template class TokenSplit<T>;                                                                                    \
  template class LerpSkip<T>;                                                                                      \
  template class PatchEmbed<T>;

HDIT_INSTANTIATE_NN(float)
HDIT_INSTANTIATE_NN(double)

}  // namespace hdit::nn
