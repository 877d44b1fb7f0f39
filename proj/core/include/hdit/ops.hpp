// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "hdit/rng.hpp"
#include "hdit/tensor.hpp"

namespace hdit {

// Broadcasting follows numpy rules: shapes align at the trailing axis and an
// extent of 1 stretches. Backward reduces gradients back to each input shape.
Shape broadcast_shapes(const Shape& a, const Shape& b);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> neg(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);
template <typename T> Tensor<T> sqrt(const Tensor<T>& x);
template <typename T> Tensor<T> rsqrt(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
/// Exact GELU: x * Phi(x) with the Gaussian CDF written via erf.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);

/// gelu(gate) * value in one pass.
template <typename T> Tensor<T> geglu(const Tensor<T>& gate, const Tensor<T>& value);

// Fused last-axis normalizations. Both are plain compositions of the ops
// above; fusing them keeps one output buffer instead of five or six.

/// x / sqrt(mean(x^2) + eps) * scale. `scale` is [d] (shared) or holds one
/// [d] row per leading index of x, i.e. numel == x.extent(0) * d.
template <typename T> Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& scale, double eps);
/// x / sqrt(sum(x^2) + eps).
template <typename T> Tensor<T> l2_normalize(const Tensor<T>& x, double eps);

/// Sum of all elements; rank-0 result.
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> sum(const Tensor<T>& x, int axis, bool keepdim = false);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x, int axis, bool keepdim = false);
/// Population variance (divides by the count).
template <typename T> Tensor<T> variance(const Tensor<T>& x);
template <typename T> Tensor<T> variance(const Tensor<T>& x, int axis, bool keepdim = false);

/// a[m,k] x b[k,n].
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// x[..., in] x weight[out, in]^T, i.e. a bias-free dense layer.
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight);

/// Softmax along `axis` with max subtraction.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// Materializing permutation: result axis i is input axis order[i].
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& order);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T> std::vector<Tensor<T>> split(const Tensor<T>& x, const std::vector<std::int64_t>& sizes, int axis);
/// Elements [start, stop) along `axis`.
template <typename T> Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t stop);
/// Cyclic shift: result[i] = x[(i - shift) mod extent] along `axis`.
template <typename T> Tensor<T> roll(const Tensor<T>& x, int axis, std::int64_t shift);

/// Row lookup table[ids[i], :] -> [ids.size(), d]. Gradient scatters back into the table.
template <typename T> Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::int64_t>& ids);

/// Inverted dropout; identity when p == 0.
template <typename T> Tensor<T> dropout(const Tensor<T>& x, double p, RngStream& rng);

/// [B, H, W, C] -> [B, H/f, W/f, f*f*C]; channel index = (dy*f + dx)*C + c.
template <typename T> Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::int64_t factor);
/// Exact inverse of pixel_unshuffle.
template <typename T> Tensor<T> pixel_shuffle(const Tensor<T>& x, std::int64_t factor);

enum class Distribution { uniform01, standard_normal };

/// Deterministic fill: value i is the i-th draw of `stream`.
template <typename T> Tensor<T> rng_fill(const Shape& shape, Distribution dist, RngStream& stream);

// Operator sugar for the binary ops.
template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

}  // namespace hdit
