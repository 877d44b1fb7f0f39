// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hdit/error.hpp"
#include "hdit/ops.hpp"

namespace hdit {

std::string to_string(LossWeighting w) {
  switch (w) {
    case LossWeighting::snr: return "snr";
    case LossWeighting::min_snr: return "min_snr";
    case LossWeighting::soft_min_snr: return "soft_min_snr";
  }
  return "?";
}

LossWeighting parse_loss_weighting(const std::string& text) {
  if (text == "snr") return LossWeighting::snr;
  if (text == "min_snr") return LossWeighting::min_snr;
  if (text == "soft_min_snr") return LossWeighting::soft_min_snr;
  throw ConfigError("unknown loss weighting '" + text + "'");
}

void DiffusionConfig::validate() const {
  if (!(sigma_data > 0)) throw ConfigError("sigma_data must be positive");
  if (!(sigma_min > 0 && sigma_min < sigma_max)) throw ConfigError("need 0 < sigma_min < sigma_max");
  if (!(gamma > 0)) throw ConfigError("gamma must be positive");
  if (cond_dropout < 0 || cond_dropout > 1) throw ConfigError("cond_dropout must be in [0, 1]");
  if (ema_decay < 0 || ema_decay > 1) throw ConfigError("ema_decay must be in [0, 1]");
  if (resolution < 1) throw ConfigError("resolution must be positive");
  if (shift_base && *shift_base < 1) throw ConfigError("shift_base must be positive");
}

Preconditioner Preconditioner::at(double sigma, double sigma_data) {
  if (!(sigma > 0)) throw ConfigError("sigma must be positive, got " + std::to_string(sigma));
  const double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
  const double root = std::sqrt(s2 + d2);
  return {d2 / (s2 + d2), sigma * sigma_data / root, 1.0 / root, std::log(sigma) / 4.0};
}

double loss_weight(double sigma, const DiffusionConfig& cfg) {
  const double snr = 1.0 / (sigma * sigma);
  switch (cfg.weighting) {
    case LossWeighting::snr: return snr;
    case LossWeighting::min_snr: return std::min(snr, cfg.gamma);
    case LossWeighting::soft_min_snr: return 1.0 / (sigma * sigma + 1.0 / cfg.gamma);
  }
  return snr;
}

double sigma_from_uniform(double u, const DiffusionConfig& cfg) {
  double log_sigma = std::log(cfg.sigma_data * std::tan(std::numbers::pi * u / 2.0));
  if (cfg.shift_base) {
    log_sigma += (1.0 - u) * std::log(static_cast<double>(cfg.resolution) / static_cast<double>(*cfg.shift_base));
  }
  return std::clamp(std::exp(log_sigma), cfg.sigma_min, cfg.sigma_max);
}

std::vector<double> sample_sigma(std::int64_t batch, const DiffusionConfig& cfg, RngStream& rng) {
  if (batch < 1) throw ConfigError("batch must be at least 1");
  std::vector<double> out(static_cast<std::size_t>(batch));
  for (std::int64_t i = 0; i < batch; ++i) {
    out[i] = sigma_from_uniform((static_cast<double>(i) + rng.uniform()) / static_cast<double>(batch), cfg);
  }
  for (std::int64_t i = batch - 1; i > 0; --i) {
    std::swap(out[i], out[rng.below(static_cast<std::uint64_t>(i + 1))]);
  }
  return out;
}

double shift_sigma(double sigma, std::int64_t target_res, std::int64_t base_res) {
  if (target_res < 1 || base_res < 1) throw ConfigError("resolutions must be positive");
  return sigma * static_cast<double>(target_res) / static_cast<double>(base_res);
}

namespace {

template <typename T>
Tensor<T> per_sample(const std::vector<double>& values, int rank) {
  Shape shape(static_cast<std::size_t>(rank), 1);
  shape[0] = static_cast<std::int64_t>(values.size());
  std::vector<T> data(values.begin(), values.end());
  return Tensor<T>(shape, std::move(data));
}

}  // namespace

template <typename T>
Tensor<T> precondition(const RawNet<T>& net, const Tensor<T>& x_sigma, std::span<const double> sigma,
                       std::span<const std::int64_t> class_ids, double sigma_data) {
  if (static_cast<std::int64_t>(sigma.size()) != x_sigma.extent(0)) throw ShapeError("need one sigma per sample");
  std::vector<double> skip, out, in;
  for (const double s : sigma) {
    const auto c = Preconditioner::at(s, sigma_data);
    skip.push_back(c.c_skip);
    out.push_back(c.c_out);
    in.push_back(c.c_in);
  }
  const int rank = x_sigma.rank();
  const Tensor<T> f = net(mul(x_sigma, per_sample<T>(in, rank)), sigma, class_ids);
  if (f.shape() != x_sigma.shape()) throw ShapeError("network output shape differs from its input");
  return add(mul(x_sigma, per_sample<T>(skip, rank)), mul(f, per_sample<T>(out, rank)));
}

template <typename T>
Tensor<T> denoising_loss(const RawNet<T>& net, const Tensor<T>& x, const Tensor<T>& noise,
                         std::span<const double> sigma, std::span<const std::int64_t> class_ids,
                         const DiffusionConfig& cfg) {
  if (noise.shape() != x.shape()) throw ShapeError("noise shape differs from data shape");
  const std::vector<double> sig(sigma.begin(), sigma.end());
  const int rank = x.rank();
  const Tensor<T> x_sigma = add(x, mul(noise, per_sample<T>(sig, rank)));
  const Tensor<T> denoised = precondition(net, x_sigma, sigma, class_ids, cfg.sigma_data);
  const std::int64_t b = x.extent(0);
  const Tensor<T> mse = mean(reshape(square(sub(denoised, x)), {b, x.numel() / b}), 1);
  std::vector<double> w;
  for (const double s : sigma) w.push_back(loss_weight(s, cfg));
  return mean(mul(mse, per_sample<T>(w, 1)));
}

template Tensor<float> precondition(const RawNet<float>&, const Tensor<float>&, std::span<const double>,
                                    std::span<const std::int64_t>, double);
template Tensor<double> precondition(const RawNet<double>&, const Tensor<double>&, std::span<const double>,
                                     std::span<const std::int64_t>, double);
template Tensor<float> denoising_loss(const RawNet<float>&, const Tensor<float>&, const Tensor<float>&,
                                      std::span<const double>, std::span<const std::int64_t>,
                                      const DiffusionConfig&);
template Tensor<double> denoising_loss(const RawNet<double>&, const Tensor<double>&, const Tensor<double>&,
                                       std::span<const double>, std::span<const std::int64_t>,
                                       const DiffusionConfig&);

}  // namespace hdit
