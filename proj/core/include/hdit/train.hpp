// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <span>

#include "hdit/checkpoint.hpp"
#include "hdit/diffusion.hpp"
#include "hdit/model.hpp"
#include "hdit/optim.hpp"

namespace hdit {

struct StepStats {
  std::int64_t step = 0;  // 1-based index of the step just taken
  double loss = 0;
  double mean_sigma = 0;
};

/// One model, its optimizer and EMA shadow. Every random draw of step s comes
/// from streams keyed by (seed, purpose, s), so a run restored from a
/// checkpoint continues exactly as an uninterrupted one would.
class Trainer {
 public:
  Trainer(HDiTModel<float>& model, const DiffusionConfig& diffusion, const AdamWConfig& optim, std::uint64_t seed);

  /// images: [B, H, W, C] in [-1, 1]; labels empty or one per image.
  /// Throws NumericError if the loss is not finite.
  StepStats step(const Tensor<float>& images, std::span<const std::int64_t> labels);

  std::int64_t steps_done() const { return step_; }
  const ParamList<float>& params() const { return params_; }
  const EMA<float>& ema() const { return ema_; }
  double weight_norm() const;
  double ema_distance() const;

  void save(Checkpoint& ckpt) const;
  void load(const Checkpoint& ckpt);

 private:
  HDiTModel<float>& model_;
  DiffusionConfig diffusion_;
  std::uint64_t seed_;
  ParamList<float> params_;
  AdamW<float> optimizer_;
  EMA<float> ema_;
  std::int64_t step_ = 0;
};

/// Preconditioned denoiser D(x, sigma) built on `model`.
template <typename T>
RawNet<T> model_net(const HDiTModel<T>& model, const ForwardOptions& options = {});

}  // namespace hdit
