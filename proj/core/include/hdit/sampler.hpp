// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hdit/diffusion.hpp"
#include "hdit/rng.hpp"
#include "hdit/tensor.hpp"

namespace hdit {

struct SamplerConfig {
  int steps = 50;
  double sigma_min = 0.002;
  double sigma_max = 80.0;
  double rho = 7.0;
  double cfg_scale = 1.0;

  friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
  void validate() const;
};

/// steps + 1 levels: (max^(1/rho) + i/(steps-1) (min^(1/rho) - max^(1/rho)))^rho
/// for i < steps, then 0. A single step gives [sigma_max, 0].
std::vector<double> sigma_grid(const SamplerConfig& cfg);

/// Denoiser D(x, sigma, class ids) on a batch sharing one sigma.
template <typename T>
using Denoiser = std::function<Tensor<T>(const Tensor<T>& x, double sigma, std::span<const std::int64_t> class_ids)>;

/// D wrapped around a raw network with EDM preconditioning.
template <typename T>
Denoiser<T> make_denoiser(RawNet<T> net, double sigma_data);

/// D_uncond + w (D_cond - D_uncond). w = 1 returns D_cond and w = 0 returns
/// D_uncond without evaluating the other branch.
template <typename T>
Tensor<T> guided_denoise(const Denoiser<T>& denoise, const Tensor<T>& x, double sigma,
                         std::span<const std::int64_t> class_ids, double cfg_scale);

/// Deterministic Heun integration of the probability-flow ODE starting from
/// sigma_max * N(0, I); the last step (to sigma = 0) is an Euler step, which
/// lands exactly on the denoised estimate. Runs without autodiff recording.
template <typename T>
Tensor<T> sample(const Denoiser<T>& denoise, const SamplerConfig& cfg, const Shape& shape,
                 std::span<const std::int64_t> class_ids, RngStream& rng);
/// Same, starting from sigma_max * `noise` (standard normal).
template <typename T>
Tensor<T> sample_from(const Denoiser<T>& denoise, const SamplerConfig& cfg, const Tensor<T>& noise,
                      std::span<const std::int64_t> class_ids);

}  // namespace hdit
