// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/sampler.hpp"

#include <cmath>

#include "hdit/error.hpp"
#include "hdit/ops.hpp"

namespace hdit {

void SamplerConfig::validate() const {
  if (steps < 1) throw ConfigError("sampler needs at least one step");
  if (!(sigma_min > 0 && sigma_min < sigma_max)) throw ConfigError("sampler needs 0 < sigma_min < sigma_max");
  if (!(rho > 0)) throw ConfigError("rho must be positive");
  if (cfg_scale < 0) throw ConfigError("guidance scale must be non-negative");
}

std::vector<double> sigma_grid(const SamplerConfig& cfg) {
  cfg.validate();
  std::vector<double> grid;
  if (cfg.steps == 1) return {cfg.sigma_max, 0.0};
  const double hi = std::pow(cfg.sigma_max, 1.0 / cfg.rho), lo = std::pow(cfg.sigma_min, 1.0 / cfg.rho);
  for (int i = 0; i < cfg.steps; ++i) {
    grid.push_back(std::pow(hi + static_cast<double>(i) / (cfg.steps - 1) * (lo - hi), cfg.rho));
  }
  grid.front() = cfg.sigma_max;
  grid.push_back(0.0);
  return grid;
}

template <typename T>
Denoiser<T> make_denoiser(RawNet<T> net, double sigma_data) {
  return [net = std::move(net), sigma_data](const Tensor<T>& x, double sigma, std::span<const std::int64_t> ids) {
    const std::vector<double> sig(static_cast<std::size_t>(x.extent(0)), sigma);
    return precondition(net, x, sig, ids, sigma_data);
  };
}

template <typename T>
Tensor<T> guided_denoise(const Denoiser<T>& denoise, const Tensor<T>& x, double sigma,
                         std::span<const std::int64_t> class_ids, double cfg_scale) {
  const std::vector<std::int64_t> uncond(static_cast<std::size_t>(x.extent(0)), -1);
  if (cfg_scale == 1.0) return denoise(x, sigma, class_ids);
  if (cfg_scale == 0.0) return denoise(x, sigma, uncond);
  const Tensor<T> c = denoise(x, sigma, class_ids);
  const Tensor<T> u = denoise(x, sigma, uncond);
  return add(u, scale(sub(c, u), static_cast<T>(cfg_scale)));
}

template <typename T>
Tensor<T> sample(const Denoiser<T>& denoise, const SamplerConfig& cfg, const Shape& shape,
                 std::span<const std::int64_t> class_ids, RngStream& rng) {
  return sample_from(denoise, cfg, rng_fill<T>(shape, Distribution::standard_normal, rng), class_ids);
}

template <typename T>
Tensor<T> sample_from(const Denoiser<T>& denoise, const SamplerConfig& cfg, const Tensor<T>& noise,
                      std::span<const std::int64_t> class_ids) {
  NoGradGuard no_grad;
  const auto grid = sigma_grid(cfg);
  Tensor<T> x = scale(noise.detach(), static_cast<T>(cfg.sigma_max));
  auto slope = [&](const Tensor<T>& at, double sigma) {
    const Tensor<T> d = guided_denoise(denoise, at, sigma, class_ids, cfg.cfg_scale);
    return std::make_pair(d, scale(sub(at, d), static_cast<T>(1.0 / sigma)));
  };
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double s = grid[i], next = grid[i + 1];
    auto [denoised, d] = slope(x, s);
    if (next == 0.0) {
      x = denoised;
      break;
    }
    const Tensor<T> euler = add(x, scale(d, static_cast<T>(next - s)));
    const auto [unused, d_next] = slope(euler, next);
    x = add(x, scale(add(d, d_next), static_cast<T>((next - s) / 2)));
  }
  return x;
}

template Denoiser<float> make_denoiser(RawNet<float>, double);
template Denoiser<double> make_denoiser(RawNet<double>, double);
template Tensor<float> guided_denoise(const Denoiser<float>&, const Tensor<float>&, double,
                                      std::span<const std::int64_t>, double);
template Tensor<double> guided_denoise(const Denoiser<double>&, const Tensor<double>&, double,
                                       std::span<const std::int64_t>, double);
template Tensor<float> sample_from(const Denoiser<float>&, const SamplerConfig&, const Tensor<float>&,
                                   std::span<const std::int64_t>);
template Tensor<double> sample_from(const Denoiser<double>&, const SamplerConfig&, const Tensor<double>&,
                                    std::span<const std::int64_t>);
template Tensor<float> sample(const Denoiser<float>&, const SamplerConfig&, const Shape&,
                              std::span<const std::int64_t>, RngStream&);
template Tensor<double> sample(const Denoiser<double>&, const SamplerConfig&, const Shape&,
                               std::span<const std::int64_t>, RngStream&);

}  // namespace hdit
