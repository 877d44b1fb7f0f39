// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "hdit/cost_model.hpp"
#include "hdit/error.hpp"

namespace hdit {
namespace {

// Independent per-layer tally for an isotropic transformer: q, k, v and out
// projections, n x n scores and weighted values, a 4d MLP, and the patch
// embedding plus output head.
double isotropic_gflop(double d, int depth, double patch, double res) {
  const double n = (res / patch) * (res / patch);
  const double qkvo = 4 * n * d * d;
  const double scores = n * n * d, mix = n * n * d;
  const double mlp = 2 * n * d * (4 * d);
  const double io = 2 * n * d * patch * patch * 3;
  return (depth * (qkvo + scores + mix + mlp) + io) * 1e-9;
}

TEST(Cost, DitMatchesIndependentTally) {
  for (const std::int64_t res : {128, 256, 512}) {
    EXPECT_NEAR(cost::count_dit(768, 12, 4, res).gflop(), isotropic_gflop(768, 12, 4, res), 1e-9);
  }
}

TEST(Cost, DitTableValues) {
  const double want[] = {106, 657, 6341};
  const std::int64_t res[] = {128, 256, 512};
  for (int i = 0; i < 3; ++i) {
    EXPECT_LT(std::abs(cost::count_dit(768, 12, 4, res[i]).gflop() / want[i] - 1), 0.05) << res[i];
  }
}

TEST(Cost, SingleGlobalLevelEqualsIsotropic) {
  ModelConfig cfg;
  cfg.patch_size = 4;
  cfg.levels = {{768, 12, {nn::AttentionKind::global, 0}, 0.0}};
  cfg.head_dim = 64;
  cfg.feedforward = nn::FeedForwardKind::gelu;
  cfg.free_core_size = true;
  for (const std::int64_t res : {64, 128}) {
    EXPECT_EQ(cost::count_hdit(cfg, res).total, cost::count_dit(768, 12, 4, res).total);
  }
}

TEST(Cost, HourglassTableValues) {
  const ModelConfig e = presets::imagenet128();
  const double want[] = {31, 65, 198};
  const std::int64_t res[] = {128, 256, 512};
  for (int i = 0; i < 3; ++i) {
    const double g = cost::count_hdit(adapt_resolution(e, res[i]), res[i]).gflop();
    EXPECT_LT(std::abs(g / want[i] - 1), 0.10) << res[i] << ": " << g;
  }
  EXPECT_LT(std::abs(cost::count_hdit(presets::ablation_global(), 128).gflop() / 32 - 1), 0.10);
}

TEST(Cost, ComponentsSumToTotal) {
  const auto r = cost::count_hdit(presets::imagenet128(), 128);
  EXPECT_EQ(r.total, r.attention_projections + r.attention_mixing + r.feedforward + r.resampling);
  ASSERT_EQ(r.levels.size(), 2u);
  EXPECT_EQ(r.levels[0].tokens, 1024);
  EXPECT_EQ(r.levels[1].tokens, 256);
  EXPECT_EQ(r.levels[0].blocks, 4);
  EXPECT_EQ(r.levels[1].blocks, 11);
  // Neighborhood mixing on the 32x32 grid: 49 keys per query.
  EXPECT_EQ(r.levels[0].attention_mixing, 4 * 2 * 1024 * 49 * 384);
}

TEST(Cost, TokenCountsQuarterPerLevel) {
  const auto r = cost::count_hdit(adapt_resolution(presets::imagenet128(), 1024), 1024);
  for (std::size_t l = 1; l < r.levels.size(); ++l) EXPECT_EQ(r.levels[l - 1].tokens, 4 * r.levels[l].tokens);
}

TEST(Cost, CoreCostIndependentOfResolution) {
  const ModelConfig e = presets::imagenet128();
  const auto base = cost::count_hdit(e, 128);
  const auto big = cost::count_hdit(adapt_resolution(e, 1024), 1024);
  const auto& a = base.levels.back();
  const auto& b = big.levels.back();
  EXPECT_EQ(a.attention_projections + a.attention_mixing + a.feedforward,
            b.attention_projections + b.attention_mixing + b.feedforward);
}

TEST(Cost, SweepReductions) {
  const auto rows = cost::scaling_sweep(presets::imagenet128(), {128, 256, 512, 1024});
  const double floor[] = {68, 88, 96, 98.5};
  for (int i = 0; i < 4; ++i) EXPECT_GE(rows[i].reduction, floor[i]) << rows[i].resolution;
  EXPECT_EQ(cost::sweep_csv(rows).substr(0, 6), "x,y,r\n");
}

TEST(Cost, DitDoublingIsSuperQuadratic) {
  const auto rep = cost::asymptotic_check(presets::imagenet128(), 4);
  EXPECT_GT(rep.dit_ratio, 10.0);
  EXPECT_TRUE(rep.geometric_bound_holds);
  EXPECT_THROW(cost::asymptotic_check(presets::imagenet128(), 2), ConfigError);
}

TEST(Cost, RejectsBadInput) {
  EXPECT_THROW(cost::count_dit(768, 12, 3, 128), ConfigError);
  EXPECT_THROW(cost::count_hdit(presets::imagenet128(), 100), ConfigError);
}

}  // namespace
}  // namespace hdit
