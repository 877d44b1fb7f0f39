// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "hdit/error.hpp"
#include "hdit/nn.hpp"
#include "test_util.hpp"

namespace hdit {
namespace {

using test::fd_rel_error;
using test::max_abs_diff;
using test::randn;
using test::stream;
using test::weighted;
using TD = Tensor<double>;
using TF = Tensor<float>;

TEST(Pattern, NeighborhoodKeyCountsAndCorners) {
  const auto p = AttentionPattern::neighborhood(8, 8, 3);
  for (std::int64_t q = 0; q < 64; ++q) EXPECT_EQ(p.key_count(q), 9);
  // Corner query: window slides inward to rows 0..2, cols 0..2.
  EXPECT_EQ(p.keys_of(0), (std::vector<std::int32_t>{0, 1, 2, 8, 9, 10, 16, 17, 18}));
  // Interior query (3, 4) is centred.
  const auto k = p.keys_of(3 * 8 + 4);
  EXPECT_EQ(k.front(), 2 * 8 + 3);
  EXPECT_EQ(k.back(), 4 * 8 + 5);
  EXPECT_THROW(AttentionPattern::neighborhood(8, 8, 4), ConfigError);
}

TEST(Pattern, KernelLargerThanGridSeesEverything) {
  const auto p = AttentionPattern::neighborhood(3, 5, 7);
  for (std::int64_t q = 0; q < 15; ++q) EXPECT_EQ(p.key_count(q), 15);
}

TEST(Pattern, WindowsPartitionTheGrid) {
  for (const std::int64_t shift : {0, 2}) {
    const auto p = AttentionPattern::windows(8, 8, 4, shift);
    std::set<std::vector<std::int32_t>> groups;
    for (std::int64_t q = 0; q < 64; ++q) {
      const auto k = p.keys_of(q);
      EXPECT_EQ(k.size(), 16u);
      EXPECT_TRUE(std::find(k.begin(), k.end(), q) != k.end());
      groups.insert(k);
    }
    EXPECT_EQ(groups.size(), 4u);
  }
  // Shift 2 groups rows {6,7,0,1} together.
  const auto k = AttentionPattern::windows(8, 8, 4, 2).keys_of(0);
  EXPECT_TRUE(std::find(k.begin(), k.end(), 7 * 8 + 7) != k.end());
  EXPECT_THROW(AttentionPattern::windows(6, 8, 4, 0), ConfigError);
}

// Binary64 loop reference for cosine attention on a given pattern.
std::vector<double> cosine_oracle(const TD& q, const TD& k, const TD& v, const std::vector<double>& tau,
                                  const AttentionPattern& pattern) {
  const auto B = q.extent(0), n = q.extent(1), H = q.extent(2), D = q.extent(3);
  std::vector<double> out(static_cast<std::size_t>(q.numel()), 0.0);
  auto at = [&](const TD& t, std::int64_t b, std::int64_t i, std::int64_t h, std::int64_t d) {
    return t[((b * n + i) * H + h) * D + d];
  };
  auto norm = [&](const TD& t, std::int64_t b, std::int64_t i, std::int64_t h) {
    double s = 0;
    for (std::int64_t d = 0; d < D; ++d) s += at(t, b, i, h, d) * at(t, b, i, h, d);
    return std::sqrt(s + 1e-6);
  };
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t h = 0; h < H; ++h)
      for (std::int64_t i = 0; i < n; ++i) {
        const auto keys = pattern.dense ? std::vector<std::int32_t>() : pattern.keys_of(i);
        std::vector<std::int64_t> ks;
        if (pattern.dense) {
          for (std::int64_t j = 0; j < n; ++j) ks.push_back(j);
        } else {
          ks.assign(keys.begin(), keys.end());
        }
        std::vector<double> logit;
        for (const auto j : ks) {
          double dot = 0;
          for (std::int64_t d = 0; d < D; ++d) dot += at(q, b, i, h, d) * at(k, b, j, h, d);
          logit.push_back(dot / (norm(q, b, i, h) * norm(k, b, j, h)) / tau[h]);
        }
        const double m = *std::max_element(logit.begin(), logit.end());
        double z = 0;
        for (auto& l : logit) z += (l = std::exp(l - m));
        for (std::size_t a = 0; a < ks.size(); ++a)
          for (std::int64_t d = 0; d < D; ++d)
            out[((b * n + i) * H + h) * D + d] += logit[a] / z * at(v, b, ks[a], h, d);
      }
  return out;
}

TEST(CosineAttention, MatchesLoopOracle) {
  auto rng = stream(20);
  const TD q = randn<double>({2, 16, 2, 8}, rng), k = randn<double>({2, 16, 2, 8}, rng),
           v = randn<double>({2, 16, 2, 8}, rng);
  const TD tau({2}, {0.1, 0.5});
  for (const auto& pattern : {AttentionPattern::global(16), AttentionPattern::neighborhood(4, 4, 3),
                              AttentionPattern::windows(4, 4, 2, 1)}) {
    const TD y = nn::cosine_attention(q, k, v, tau, pattern);
    EXPECT_LT(max_abs_diff(std::span<const double>(y.data()), cosine_oracle(q, k, v, tau.to_vector(), pattern)),
              1e-12);
  }
}

TEST(CosineAttention, WeightsAreRowStochasticAndBounded) {
  auto rng = stream(21);
  const TF q = randn<float>({1, 16, 1, 8}, rng), k = randn<float>({1, 16, 1, 8}, rng);
  const TF tau({1}, {0.1f});
  const auto w = nn::cosine_attention_weights(q, k, tau, AttentionPattern::neighborhood(4, 4, 3));
  for (int i = 0; i < 16; ++i) {
    double s = 0, mx = 0;
    int nonzero = 0;
    for (int j = 0; j < 16; ++j) {
      s += w[i * 16 + j];
      mx = std::max<double>(mx, w[i * 16 + j]);
      nonzero += w[i * 16 + j] > 0;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
    EXPECT_EQ(nonzero, 9);
    // Cosine logits span at most 2/tau, so no weight can exceed this bound.
    EXPECT_LE(mx, 1.0 / (1.0 + 8.0 * std::exp(-2.0 / 0.1)) + 1e-6);
  }
}

TEST(GridAttention, CoveringKernelsReduceToGlobal) {
  auto rng = stream(22);
  const TF q = randn<float>({1, 36, 2, 4}, rng), k = randn<float>({1, 36, 2, 4}, rng),
           v = randn<float>({1, 36, 2, 4}, rng);
  const TF g = nn::global_attention(q, k, v);
  EXPECT_LT(max_abs_diff(nn::neighborhood_attention(q, k, v, 6, 6, 11), g), 1e-5);
  EXPECT_LT(max_abs_diff(nn::swin_attention(q, k, v, 6, 6, 6, false), g), 1e-5);
}

TEST(GridAttention, ShiftedSwinMatchesRolledPattern) {
  auto rng = stream(23);
  const TD q = randn<double>({1, 64, 1, 4}, rng), k = randn<double>({1, 64, 1, 4}, rng),
           v = randn<double>({1, 64, 1, 4}, rng);
  const TD via_roll = nn::swin_attention(q, k, v, 8, 8, 4, true);
  const TD via_pattern = pattern_attention(q, k, v, AttentionPattern::windows(8, 8, 4, 2));
  EXPECT_LT(max_abs_diff(via_roll, via_pattern), 1e-12);
}

TEST(Rope, PreservesNormAndPassesUpperHalf) {
  auto rng = stream(24);
  const auto table = RopeTable::build(TokenPositions::grid(4, 4), 16);
  EXPECT_EQ(table.angles, 4);
  const TD x = randn<double>({1, 16, 2, 16}, rng);
  const TD y = apply_axial_rope(x, table);
  for (int t = 0; t < 32; ++t) {
    double nx = 0, ny = 0;
    for (int d = 0; d < 16; ++d) {
      nx += x[t * 16 + d] * x[t * 16 + d];
      ny += y[t * 16 + d] * y[t * 16 + d];
      if (d >= 8) {
        EXPECT_EQ(y[t * 16 + d], x[t * 16 + d]);
      }
    }
    EXPECT_NEAR(nx, ny, 1e-12);
  }
  // Token 0 sits at (0, 0): zero angles.
  for (int d = 0; d < 16; ++d) EXPECT_NEAR(y[d], x[d], 1e-15);
}

TEST(Rope, DotProductDependsOnOffsetOnly) {
  auto rng = stream(25);
  const auto table = RopeTable::build(TokenPositions::grid(6, 6), 8);
  const TD a = randn<double>({1, 1, 1, 8}, rng), b = randn<double>({1, 1, 1, 8}, rng);
  auto at_token = [&](const TD& x, std::int64_t token) {
    std::vector<double> v(36 * 8, 0.0);
    std::copy(x.data().begin(), x.data().end(), v.begin() + token * 8);
    const TD r = apply_axial_rope(TD({1, 36, 1, 8}, v), table);
    return std::vector<double>(r.data().begin() + token * 8, r.data().begin() + token * 8 + 8);
  };
  auto dot = [&](std::int64_t ta, std::int64_t tb) {
    const auto x = at_token(a, ta), y = at_token(b, tb);
    double s = 0;
    for (int d = 0; d < 8; ++d) s += x[d] * y[d];
    return s;
  };
  // Offset (+1, +2) from two different anchors.
  EXPECT_NEAR(dot(0 * 6 + 0, 1 * 6 + 2), dot(3 * 6 + 2, 4 * 6 + 4), 1e-12);
}

TEST(Norms, RmsNormExample) {
  const TD y = nn::rms_norm(TD({1, 2}, {3, 4}), TD::ones({2}), 0.0);
  const double r = std::sqrt(12.5);
  EXPECT_NEAR(y[0], 3 / r, 1e-15);
  EXPECT_NEAR(y[1], 4 / r, 1e-15);
}

TEST(Norms, AdaRmsNormStartsAsPlainRmsNorm) {
  auto init = stream(26);
  nn::AdaRMSNorm<double> ada(8, 4, init);
  auto rng = stream(27);
  const TD x = randn<double>({2, 3, 8}, rng), cond = randn<double>({2, 4}, rng);
  EXPECT_LT(max_abs_diff(ada(x, cond), nn::rms_norm(x, TD::ones({8}))), 1e-15);
}

TEST(Blocks, ResidualBranchesAreZeroAtInit) {
  auto init = stream(28);
  nn::HDiTBlock<float> block(32, 16, 16, nn::FeedForwardKind::geglu, 0.0, init);
  const auto geo = nn::TokenGeometry::build(4, 4, {nn::AttentionKind::neighborhood, 3}, 16);
  auto rng = stream(29);
  const TF x = randn<float>({2, 16, 32}, rng), cond = randn<float>({2, 16}, rng);
  EXPECT_EQ(block(x, cond, geo).to_vector(), x.to_vector());
  for (const float t : block.attn.tau.data()) EXPECT_FLOAT_EQ(t, static_cast<float>(nn::kTauInit));
  EXPECT_EQ(block.attn.heads, 2);
}

TEST(Blocks, GeGluHiddenWidthIsThreeTimesWidth) {
  auto init = stream(30);
  nn::FeedForward<float> geglu(nn::FeedForwardKind::geglu, 64, 16, 0.0, init);
  nn::FeedForward<float> gelu(nn::FeedForwardKind::gelu, 64, 16, 0.0, init);
  EXPECT_EQ(geglu.up_gate.weight.shape(), (Shape{192, 64}));
  EXPECT_EQ(geglu.down.weight.shape(), (Shape{64, 192}));
  EXPECT_EQ(gelu.up_value.weight.shape(), (Shape{256, 64}));
}

TEST(Blocks, ParameterNamesAndDecayFlags) {
  auto init = stream(31);
  nn::HDiTBlock<float> block(32, 16, 16, nn::FeedForwardKind::geglu, 0.0, init);
  ParamList<float> params;
  block.collect(params, "b.");
  std::set<std::string> names;
  for (const auto& p : params) {
    names.insert(p.name);
    if (p.name.find("tau") != std::string::npos) {
      EXPECT_FALSE(p.decay);
    }
  }
  EXPECT_EQ(names.size(), params.size());
}

TEST(Resampling, MergeSplitShapes) {
  auto init = stream(32);
  nn::TokenMerge<float> merge(8, 16, init);
  nn::TokenSplit<float> split(16, 8, init);
  auto rng = stream(33);
  const TF x = randn<float>({2, 4, 6, 8}, rng);
  const TF m = merge(x);
  EXPECT_EQ(m.shape(), (Shape{2, 2, 3, 16}));
  EXPECT_EQ(split(m).shape(), x.shape());
}

TEST(Resampling, LerpEndpointsAndMidpoint) {
  const TD skip({2}, {1, 3}), up({2}, {5, 7});
  EXPECT_EQ(nn::lerp_merge(skip, up, TD({1}, {1.0})).to_vector(), skip.to_vector());
  EXPECT_EQ(nn::lerp_merge(skip, up, TD({1}, {0.0})).to_vector(), up.to_vector());
  nn::LerpSkip<double> lerp;
  EXPECT_EQ(lerp(skip, up).to_vector(), (std::vector<double>{3, 5}));
}

TEST(Resampling, PatchEmbedShape) {
  auto init = stream(34);
  nn::PatchEmbed<float> embed(4, 3, 32, init);
  EXPECT_EQ(embed(TF::zeros({1, 16, 8, 3})).shape(), (Shape{1, 4, 2, 32}));
}

TEST(Mapping, FrequenciesAreLogSpaced) {
  const auto f = nn::MappingNetwork<float>::fourier_frequencies();
  ASSERT_EQ(f.size(), static_cast<std::size_t>(nn::kFourierFrequencies));
  EXPECT_NEAR(f.front(), 0.5, 1e-12);
  EXPECT_NEAR(f.back(), 64.0, 1e-9);
  for (std::size_t i = 2; i < f.size(); ++i) EXPECT_NEAR(f[i] / f[i - 1], f[1] / f[0], 1e-9);
}

TEST(Mapping, ClassesChangeTheOutput) {
  auto init = stream(35);
  nn::MappingNetwork<float> net(32, 2, 3, init);
  const std::vector<double> sigma{1.0, 1.0, 1.0};
  const std::vector<std::int64_t> ids{0, 1, -1};
  const TF y = net(sigma, ids);
  EXPECT_EQ(y.shape(), (Shape{3, 32}));
  EXPECT_GT(max_abs_diff(slice(y, 0, 0, 1), slice(y, 0, 1, 2)), 1e-4);
  EXPECT_GT(max_abs_diff(slice(y, 0, 0, 1), slice(y, 0, 2, 3)), 1e-4);
  const std::vector<std::int64_t> bad{3};
  EXPECT_THROW(net(std::vector<double>{1.0}, bad), ConfigError);
}

TEST(Gradients, BlocksMatchFiniteDifferences) {
  auto init = stream(36);
  nn::HDiTBlock<double> block(16, 8, 8, nn::FeedForwardKind::geglu, 0.0, init);
  ParamList<double> params;
  block.collect(params, "");
  // Move zero-initialized projections off zero so every path carries gradient.
  auto scramble = stream(37);
  for (auto& p : params)
    for (auto& v : p.tensor.data_mut()) v += 0.2 * scramble.normal();
  const auto geo = nn::TokenGeometry::build(4, 4, {nn::AttentionKind::neighborhood, 3}, 8);
  auto rng = stream(38);
  TD x = randn<double>({1, 16, 16}, rng, 1.0, true), cond = randn<double>({1, 8}, rng, 1.0, true);
  std::vector<TD> inputs{x, cond};
  for (auto& p : params) inputs.push_back(p.tensor);
  EXPECT_LT(fd_rel_error([&] { return weighted(block(x, cond, geo)); }, inputs), 1e-6);
}

}  // namespace
}  // namespace hdit
