// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdit/checkpoint.hpp"
#include "hdit/tensor.hpp"

namespace hdit {

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 1e-2;

  friend bool operator==(const AdamWConfig&, const AdamWConfig&) = default;
  void validate() const;
};

/// AdamW with bias correction and decoupled weight decay, applied only to
/// parameters flagged `decay`. Parameters without a gradient are skipped.
template <typename T>
class AdamW {
 public:
  AdamW(const ParamList<T>& params, const AdamWConfig& cfg);

  void step();
  void zero_grad();
  std::int64_t steps_taken() const { return t_; }

  void save(Checkpoint& ckpt, const std::string& prefix) const;
  void load(const Checkpoint& ckpt, const std::string& prefix);

 private:
  ParamList<T> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::int64_t t_ = 0;
};

/// Shadow copy updated as shadow = decay * shadow + (1 - decay) * param.
template <typename T>
class EMA {
 public:
  explicit EMA(const ParamList<T>& params);

  void update(const ParamList<T>& params, double decay);
  /// L2 distance between the shadow and `params`.
  double distance(const ParamList<T>& params) const;
  /// Writes the shadow values into `params` (same layout).
  void copy_to(const ParamList<T>& params) const;
  const std::vector<std::vector<T>>& shadow() const { return shadow_; }

  void save(Checkpoint& ckpt, const std::string& prefix, const ParamList<T>& layout) const;
  void load(const Checkpoint& ckpt, const std::string& prefix, const ParamList<T>& layout);

 private:
  std::vector<std::vector<T>> shadow_;
};

/// Clamps every parameter whose name ends in `suffix` to at least `floor`.
template <typename T>
void clamp_params(const ParamList<T>& params, const std::string& suffix, double floor);

/// sqrt of the sum of squares over all parameters.
template <typename T>
double weight_norm(const ParamList<T>& params);

}  // namespace hdit
