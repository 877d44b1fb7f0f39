// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hdit/rng.hpp"
#include "hdit/tensor.hpp"

namespace hdit {

enum class LossWeighting { snr, min_snr, soft_min_snr };

std::string to_string(LossWeighting w);
LossWeighting parse_loss_weighting(const std::string& text);

struct DiffusionConfig {
  double sigma_data = 0.5;
  double sigma_min = 1e-3;
  double sigma_max = 1e3;
  LossWeighting weighting = LossWeighting::soft_min_snr;
  double gamma = 4.0;
  double cond_dropout = 0.1;
  double ema_decay = 0.9999;
  /// Training resolution and, when set, the reference resolution whose noise
  /// schedule the training density is interpolated from.
  std::int64_t resolution = 128;
  std::optional<std::int64_t> shift_base;

  friend bool operator==(const DiffusionConfig&, const DiffusionConfig&) = default;
  void validate() const;
};

/// EDM scalings at one noise level.
struct Preconditioner {
  double c_skip = 0;
  double c_out = 0;
  double c_in = 0;
  double c_noise = 0;

  static Preconditioner at(double sigma, double sigma_data);
};

/// Weight applied to the per-pixel x0 MSE: snr 1/s^2, min-snr min(1/s^2, g),
/// soft-min-snr 1/(s^2 + 1/g).
double loss_weight(double sigma, const DiffusionConfig& cfg);

/// Maps u in (0, 1) to sigma: sigma_data * tan(pi u / 2), shifted in log
/// space by (1 - u) * ln(resolution / shift_base) when a shift base is set,
/// then clamped to [sigma_min, sigma_max].
double sigma_from_uniform(double u, const DiffusionConfig& cfg);

/// Stratified draw: sample i takes u from [i/batch, (i+1)/batch), then the
/// batch is shuffled.
std::vector<double> sample_sigma(std::int64_t batch, const DiffusionConfig& cfg, RngStream& rng);

/// sigma * target_res / base_res (SNR divided by the squared ratio).
double shift_sigma(double sigma, std::int64_t target_res, std::int64_t base_res);

/// Raw network F(c_in x, sigma, class ids); sigma enters unscaled and the
/// network derives c_noise itself.
template <typename T>
using RawNet = std::function<Tensor<T>(const Tensor<T>& x_in, std::span<const double> sigma,
                                       std::span<const std::int64_t> class_ids)>;

/// D(x, sigma) = c_skip x + c_out F(c_in x, sigma) with per-sample scalings.
template <typename T>
Tensor<T> precondition(const RawNet<T>& net, const Tensor<T>& x_sigma, std::span<const double> sigma,
                       std::span<const std::int64_t> class_ids, double sigma_data);

/// mean_i w(sigma_i) * mean((D(x_i + sigma_i n_i) - x_i)^2).
template <typename T>
Tensor<T> denoising_loss(const RawNet<T>& net, const Tensor<T>& x, const Tensor<T>& noise,
                         std::span<const double> sigma, std::span<const std::int64_t> class_ids,
                         const DiffusionConfig& cfg);

}  // namespace hdit
