// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "hdit/error.hpp"
#include "hdit/sampler.hpp"
#include "test_util.hpp"

namespace hdit {
namespace {

using test::max_abs_diff;
using test::randn;
using test::stream;
using TD = Tensor<double>;

TEST(SigmaGrid, EndpointsAndMonotone) {
  SamplerConfig cfg;
  const auto g = sigma_grid(cfg);
  ASSERT_EQ(g.size(), 51u);
  EXPECT_EQ(g.front(), 80.0);
  EXPECT_NEAR(g[49], 0.002, 1e-12);
  EXPECT_EQ(g.back(), 0.0);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_LT(g[i], g[i - 1]);
}

TEST(SigmaGrid, RhoSpacingFormula) {
  SamplerConfig cfg;
  cfg.steps = 4;
  const auto g = sigma_grid(cfg);
  const double hi = std::pow(80.0, 1 / 7.0), lo = std::pow(0.002, 1 / 7.0);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(g[i], std::pow(hi + i / 3.0 * (lo - hi), 7.0), 1e-9 * g[i]);
}

TEST(SigmaGrid, SingleStep) {
  SamplerConfig cfg;
  cfg.steps = 1;
  EXPECT_EQ(sigma_grid(cfg), (std::vector<double>{80.0, 0.0}));
  cfg.steps = 0;
  EXPECT_THROW(sigma_grid(cfg), ConfigError);
}

// Data concentrated at a single point c: the exact denoiser is D(x, s) = c
// and the probability-flow ODE lands on c from any start.
TEST(Sampler, PointMassIsRecovered) {
  const TD c({1, 2, 2, 1}, {0.3, -0.7, 0.1, 0.9});
  const Denoiser<double> denoise = [&](const TD& x, double, std::span<const std::int64_t>) {
    return TD(x.shape(), std::vector<double>(c.data().begin(), c.data().end()));
  };
  SamplerConfig cfg;
  cfg.steps = 5;
  auto rng = stream(60);
  const TD out = sample(denoise, cfg, c.shape(), {}, rng);
  EXPECT_LT(max_abs_diff(out, c), 1e-12);
}

// Gaussian data N(0, s_d^2): D(x, s) = x s_d^2 / (s^2 + s_d^2). The ODE
// solution maps x_T = s_max z to s_d z / sqrt(1 + s_d^2 / s_max^2) at s = 0+.
TEST(Sampler, GaussianDataFollowsClosedForm) {
  const double sd = 0.5;
  const Denoiser<double> denoise = [&](const TD& x, double s, std::span<const std::int64_t>) {
    return scale(x, sd * sd / (s * s + sd * sd));
  };
  SamplerConfig cfg;
  cfg.steps = 800;
  cfg.sigma_min = 1e-4;
  auto rng = stream(61);
  const TD z = randn<double>({1, 3, 3, 1}, rng);
  const TD out = sample_from(denoise, cfg, z, {});
  // The final Euler step to zero applies D at sigma_min.
  const double at_min = sd * std::sqrt(cfg.sigma_min * cfg.sigma_min + sd * sd) /
                        std::sqrt(cfg.sigma_max * cfg.sigma_max + sd * sd) * cfg.sigma_max;
  const double factor = at_min * sd * sd / (cfg.sigma_min * cfg.sigma_min + sd * sd) / sd;
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(out[i], z[i] * factor, 1e-4);
}

TEST(Guidance, ScaleConventions) {
  int calls_cond = 0, calls_uncond = 0;
  const Denoiser<double> denoise = [&](const TD& x, double, std::span<const std::int64_t> ids) {
    const bool uncond = !ids.empty() && ids[0] == -1;
    (uncond ? calls_uncond : calls_cond)++;
    return TD::full(x.shape(), uncond ? 1.0 : 3.0);
  };
  const TD x = TD::zeros({1, 1, 1, 1});
  const std::vector<std::int64_t> ids{0};
  EXPECT_EQ(guided_denoise(denoise, x, 1.0, ids, 1.0).item(), 3.0);
  EXPECT_EQ(calls_uncond, 0);
  EXPECT_EQ(guided_denoise(denoise, x, 1.0, ids, 0.0).item(), 1.0);
  EXPECT_EQ(calls_cond, 1);
  // w = 2: 1 + 2 (3 - 1).
  EXPECT_EQ(guided_denoise(denoise, x, 1.0, ids, 2.0).item(), 5.0);
}

TEST(Sampler, SameNoiseSameSamples) {
  const Denoiser<double> denoise = [](const TD& x, double s, std::span<const std::int64_t>) {
    return scale(x, 1.0 / (1.0 + s));
  };
  SamplerConfig cfg;
  cfg.steps = 8;
  auto a = stream(62), b = stream(62);
  EXPECT_EQ(sample(denoise, cfg, {2, 2, 2, 1}, {}, a).to_vector(),
            sample(denoise, cfg, {2, 2, 2, 1}, {}, b).to_vector());
}

}  // namespace
}  // namespace hdit
