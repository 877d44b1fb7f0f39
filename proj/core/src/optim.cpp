// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/optim.hpp"

#include <algorithm>
#include <cmath>

#include "hdit/error.hpp"

namespace hdit {

void AdamWConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("betas must be in [0, 1)");
  if (!(eps > 0)) throw ConfigError("eps must be positive");
  if (weight_decay < 0) throw ConfigError("weight decay must be non-negative");
}

template <typename T>
AdamW<T>::AdamW(const ParamList<T>& params, const AdamWConfig& cfg) : params_(params), cfg_(cfg) {
  cfg_.validate();
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), T(0));
    v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), T(0));
  }
}

template <typename T>
void AdamW<T>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  const T step_size = static_cast<T>(cfg_.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T> p = params_[i].tensor;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.data_mut();
    auto& m = m_[i];
    auto& v = v_[i];
    const T decay = params_[i].decay ? static_cast<T>(1.0 - cfg_.lr * cfg_.weight_decay) : T(1);
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      w[j] = w[j] * decay - step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (const auto& p : params_) {
    Tensor<T> t = p.tensor;
    t.zero_grad();
  }
}

template <typename T>
void AdamW<T>::save(Checkpoint& ckpt, const std::string& prefix) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ckpt.put(prefix + "m." + params_[i].name, params_[i].tensor.shape(), std::span<const T>(m_[i]));
    ckpt.put(prefix + "v." + params_[i].name, params_[i].tensor.shape(), std::span<const T>(v_[i]));
  }
  ckpt.put_int(prefix + "t", t_);
}

template <typename T>
void AdamW<T>::load(const Checkpoint& ckpt, const std::string& prefix) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i] = ckpt.get<T>(prefix + "m." + params_[i].name, params_[i].tensor.shape());
    v_[i] = ckpt.get<T>(prefix + "v." + params_[i].name, params_[i].tensor.shape());
  }
  t_ = ckpt.get_int(prefix + "t");
}

template <typename T>
EMA<T>::EMA(const ParamList<T>& params) {
  for (const auto& p : params) shadow_.push_back(p.tensor.to_vector());
}

template <typename T>
void EMA<T>::update(const ParamList<T>& params, double decay) {
  if (params.size() != shadow_.size()) throw ShapeError("EMA layout differs from parameter list");
  const T a = static_cast<T>(decay), b = static_cast<T>(1.0 - decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto w = params[i].tensor.data();
    auto& s = shadow_[i];
    for (std::size_t j = 0; j < s.size(); ++j) s[j] = a * s[j] + b * w[j];
  }
}

template <typename T>
double EMA<T>::distance(const ParamList<T>& params) const {
  double acc = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto w = params[i].tensor.data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double d = static_cast<double>(shadow_[i][j]) - static_cast<double>(w[j]);
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

template <typename T>
void EMA<T>::copy_to(const ParamList<T>& params) const {
  if (params.size() != shadow_.size()) throw ShapeError("EMA layout differs from parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> t = params[i].tensor;
    std::copy(shadow_[i].begin(), shadow_[i].end(), t.data_mut().begin());
  }
}

template <typename T>
void EMA<T>::save(Checkpoint& ckpt, const std::string& prefix, const ParamList<T>& layout) const {
  for (std::size_t i = 0; i < layout.size(); ++i) {
    ckpt.put(prefix + layout[i].name, layout[i].tensor.shape(), std::span<const T>(shadow_[i]));
  }
}

template <typename T>
void EMA<T>::load(const Checkpoint& ckpt, const std::string& prefix, const ParamList<T>& layout) {
  shadow_.clear();
  for (const auto& p : layout) shadow_.push_back(ckpt.get<T>(prefix + p.name, p.tensor.shape()));
}

template <typename T>
void clamp_params(const ParamList<T>& params, const std::string& suffix, double floor) {
  const T lo = static_cast<T>(floor);
  for (const auto& p : params) {
    if (p.name.size() < suffix.size() || p.name.compare(p.name.size() - suffix.size(), suffix.size(), suffix) != 0) {
      continue;
    }
    Tensor<T> t = p.tensor;
    for (auto& v : t.data_mut()) v = std::max(v, lo);
  }
}

template <typename T>
double weight_norm(const ParamList<T>& params) {
  double acc = 0;
  for (const auto& p : params) {
    for (const T v : p.tensor.data()) acc += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(acc);
}

template class AdamW<float>;
template class AdamW<double>;
template class EMA<float>;
template class EMA<double>;
template void clamp_params(const ParamList<float>&, const std::string&, double);
template void clamp_params(const ParamList<double>&, const std::string&, double);
template double weight_norm(const ParamList<float>&);
template double weight_norm(const ParamList<double>&);

}  // namespace hdit
