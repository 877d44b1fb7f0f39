// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "hdit/ops.hpp"
#include "hdit/rng.hpp"
#include "hdit/tensor.hpp"

namespace hdit::test {

inline RngStream stream(std::uint64_t id) { return RngStream::for_step(1234, StreamPurpose::test, id); }

template <typename T>
Tensor<T> randn(const Shape& shape, RngStream& rng, double scale = 1.0, bool requires_grad = false) {
  std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(rng.normal() * scale);
  return Tensor<T>(shape, std::move(v), requires_grad);
}

template <typename T>
Tensor<T> uniform(const Shape& shape, RngStream& rng, double lo, double hi, bool requires_grad = false) {
  std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(lo + (hi - lo) * rng.uniform());
  return Tensor<T>(shape, std::move(v), requires_grad);
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Worst relative error between autodiff and central differences (h = 1e-5)
/// over every coordinate of every input, measured per input as
/// |a - n| / max(|a|, |n|) on the full gradient vector.
inline double fd_rel_error(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> inputs,
                           double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  loss().backward();
  double worst = 0;
  NoGradGuard guard;
  for (auto& t : inputs) {
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    if (analytic.empty()) analytic.assign(static_cast<std::size_t>(t.numel()), 0.0);
    double d2 = 0, a2 = 0, n2 = 0;
    auto data = t.data_mut();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double fp = loss().item();
      data[i] = orig - h;
      const double fm = loss().item();
      data[i] = orig;
      const double num = (fp - fm) / (2 * h);
      d2 += (analytic[i] - num) * (analytic[i] - num);
      a2 += analytic[i] * analytic[i];
      n2 += num * num;
    }
    const double scale = std::sqrt(std::max(a2, n2));
    worst = std::max(worst, scale > 1e-12 ? std::sqrt(d2) / scale : std::sqrt(d2));
  }
  return worst;
}

/// sum(f * w) for a fixed random w, making every output element count.
inline Tensor<double> weighted(const Tensor<double>& y, std::uint64_t id = 77) {
  RngStream rng = stream(id);
  return sum(mul(y, randn<double>(y.shape(), rng)));
}

}  // namespace hdit::test
