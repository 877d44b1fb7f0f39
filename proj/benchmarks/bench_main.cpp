// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "hdit/attention.hpp"
#include "hdit/cost_model.hpp"
#include "hdit/model.hpp"
#include "hdit/nn.hpp"
#include "hdit/ops.hpp"
#include "hdit/train.hpp"

namespace {

using hdit::RngStream;
using hdit::Shape;
using hdit::StreamPurpose;
using hdit::Tensor;

Tensor<float> noise(const Shape& shape, std::uint64_t step, bool grad = false) {
  RngStream rng = RngStream::for_step(99, StreamPurpose::test, step);
  auto t = hdit::rng_fill<float>(shape, hdit::Distribution::standard_normal, rng);
  t.set_requires_grad(grad);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = state.range(0);
  const auto a = noise({n, n}, 0), b = noise({n, n}, 1);
  hdit::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(hdit::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(512);

// Attention forward over a 16x16 grid, 4 heads of width 32.
void BM_Attention(benchmark::State& state) {
  const auto kernel = state.range(0);
  const Shape s{4, 256, 4, 32};
  const auto q = noise(s, 2), k = noise(s, 3), v = noise(s, 4);
  const auto pattern =
      kernel == 0 ? hdit::AttentionPattern::global(256) : hdit::AttentionPattern::neighborhood(16, 16, kernel);
  hdit::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(hdit::pattern_attention(q, k, v, pattern));
}
BENCHMARK(BM_Attention)->Arg(0)->Arg(7)->Unit(benchmark::kMillisecond);

void BM_BlockForwardBackward(benchmark::State& state) {
  RngStream init = RngStream::for_step(99, StreamPurpose::init, 0);
  const hdit::nn::HDiTBlock<float> block(128, 32, 128, hdit::nn::FeedForwardKind::geglu, 0.0, init);
  const auto geo = hdit::nn::TokenGeometry::build(16, 16, {hdit::nn::AttentionKind::neighborhood, 7}, 32);
  const auto x = noise({8, 256, 128}, 5, true);
  const auto cond = noise({8, 128}, 6);
  for (auto _ : state) {
    const auto y = block(x, cond, geo);
    hdit::sum(y).backward();
  }
}
BENCHMARK(BM_BlockForwardBackward)->Unit(benchmark::kMillisecond);

// One full training step of the desk-scale model at batch 32.
void BM_SmokeTrainStep(benchmark::State& state) {
  hdit::HDiTModel<float> model(hdit::presets::smoke(), 1);
  hdit::DiffusionConfig diffusion;
  diffusion.resolution = 32;
  hdit::Trainer trainer(model, diffusion, hdit::AdamWConfig{}, 1);
  const auto images = noise({32, 32, 32, 3}, 7);
  std::vector<std::int64_t> labels(32);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::int64_t>(i % 2);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(images, labels));
}
BENCHMARK(BM_SmokeTrainStep)->Unit(benchmark::kMillisecond)->Iterations(5);

void BM_CostSweep(benchmark::State& state) {
  const auto cfg = hdit::presets::imagenet128();
  const std::vector<std::int64_t> res = {128, 256, 512, 1024, 2048};
  for (auto _ : state) benchmark::DoNotOptimize(hdit::cost::scaling_sweep(cfg, res));
}
BENCHMARK(BM_CostSweep);

}  // namespace

BENCHMARK_MAIN();
