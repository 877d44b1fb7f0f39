// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/train.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "hdit/error.hpp"
#include "hdit/nn.hpp"
#include "hdit/ops.hpp"

namespace hdit {

template <typename T>
RawNet<T> model_net(const HDiTModel<T>& model, const ForwardOptions& options) {
  return [&model, options](const Tensor<T>& x, std::span<const double> sigma, std::span<const std::int64_t> ids) {
    return model.forward(x, sigma, ids, options);
  };
}

template RawNet<float> model_net(const HDiTModel<float>&, const ForwardOptions&);
template RawNet<double> model_net(const HDiTModel<double>&, const ForwardOptions&);

Trainer::Trainer(HDiTModel<float>& model, const DiffusionConfig& diffusion, const AdamWConfig& optim,
                 std::uint64_t seed)
    : model_(model),
      diffusion_(diffusion),
      seed_(seed),
      params_(model.parameters()),
      optimizer_(params_, optim),
      ema_(params_) {
  diffusion_.validate();
}

StepStats Trainer::step(const Tensor<float>& images, std::span<const std::int64_t> labels) {
  const auto s = static_cast<std::uint64_t>(step_);
  const std::int64_t batch = images.extent(0);
  if (!labels.empty() && static_cast<std::int64_t>(labels.size()) != batch) {
    throw ShapeError("label count does not match the batch");
  }

  RngStream sigma_rng = RngStream::for_step(seed_, StreamPurpose::sigma, s);
  RngStream noise_rng = RngStream::for_step(seed_, StreamPurpose::noise, s);
  RngStream cond_rng = RngStream::for_step(seed_, StreamPurpose::cond_dropout, s);
  RngStream dropout_rng = RngStream::for_step(seed_, StreamPurpose::dropout, s);

  const std::vector<double> sigma = sample_sigma(batch, diffusion_, sigma_rng);
  const Tensor<float> noise = rng_fill<float>(images.shape(), Distribution::standard_normal, noise_rng);
  std::vector<std::int64_t> cond(labels.begin(), labels.end());
  for (auto& c : cond) {
    if (cond_rng.uniform() < diffusion_.cond_dropout) c = -1;
  }

  ForwardOptions options;
  options.dropout_rng = &dropout_rng;
  optimizer_.zero_grad();
  const Tensor<float> loss = denoising_loss(model_net(model_, options), images, noise, sigma, cond, diffusion_);
  const double value = loss.item();
  const double mean_sigma = std::accumulate(sigma.begin(), sigma.end(), 0.0) / static_cast<double>(batch);
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "non-finite loss " << value << " at step " << step_ + 1 << " (mean sigma " << mean_sigma << ")";
    throw NumericError(msg.str());
  }
  loss.backward();
  optimizer_.step();
  clamp_params(params_, ".tau", nn::kTauFloor);
  ema_.update(params_, diffusion_.ema_decay);
  ++step_;
  return {step_, value, mean_sigma};
}

double Trainer::weight_norm() const { return hdit::weight_norm(params_); }

double Trainer::ema_distance() const { return ema_.distance(params_); }

void Trainer::save(Checkpoint& ckpt) const {
  store_params(ckpt, "model.", params_);
  ema_.save(ckpt, "ema.", params_);
  optimizer_.save(ckpt, "adam.");
  ckpt.put_int("train.step", step_);
}

void Trainer::load(const Checkpoint& ckpt) {
  load_params(ckpt, "model.", params_);
  ema_.load(ckpt, "ema.", params_);
  optimizer_.load(ckpt, "adam.");
  step_ = ckpt.get_int("train.step");
}

}  // namespace hdit
