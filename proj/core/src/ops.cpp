// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/ops.hpp"

#include <Eigen/Core>
#if defined(__AVX__)
#include <immintrin.h>
#endif
#include <algorithm>
#include <cmath>
#include <numbers>
#include <memory>
#include <numeric>

#include "hdit/error.hpp"
#include "hdit/parallel.hpp"

namespace hdit {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMatrix<T>>;

// Eigen's wide kernels can return with the upper vector state dirty, after
// which libm's SSE code (erf, exp) runs many times slower.
inline void clear_upper_state() {
#if defined(__AVX__)
  _mm256_zeroupper();
#endif
}

std::vector<std::int64_t> contiguous_strides(const Shape& shape) {
  std::vector<std::int64_t> strides(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) strides[i] = strides[i + 1] * shape[i + 1];
  return strides;
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::int64_t> stride_a;
  std::vector<std::int64_t> stride_b;
  bool same = false;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  plan.out = broadcast_shapes(a, b);
  plan.same = (a == b);
  const std::size_t rank = plan.out.size();
  auto strides_for = [&](const Shape& s) {
    std::vector<std::int64_t> st(rank, 0);
    const auto own = contiguous_strides(s);
    const std::size_t offset = rank - s.size();
    for (std::size_t i = 0; i < s.size(); ++i) st[offset + i] = (s[i] == 1 && plan.out[offset + i] != 1) ? 0 : own[i];
    return st;
  };
  plan.stride_a = strides_for(a);
  plan.stride_b = strides_for(b);
  return plan;
}

// Calls f(out_index, a_index, b_index) for every output element in row-major order.
template <typename F>
void visit_broadcast(const BroadcastPlan& plan, F&& f) {
  const std::int64_t total = shape_numel(plan.out);
  if (plan.same) {
    for (std::int64_t i = 0; i < total; ++i) f(i, i, i);
    return;
  }
  const int rank = static_cast<int>(plan.out.size());
  if (rank == 0) {
    f(0, 0, 0);
    return;
  }
  const std::int64_t inner = plan.out[rank - 1];
  const std::int64_t ia_step = plan.stride_a[rank - 1];
  const std::int64_t ib_step = plan.stride_b[rank - 1];
  std::vector<std::int64_t> counter(rank, 0);
  std::int64_t base_a = 0, base_b = 0;
  for (std::int64_t o = 0; o < total; o += inner) {
    std::int64_t ia = base_a, ib = base_b;
    for (std::int64_t j = 0; j < inner; ++j, ia += ia_step, ib += ib_step) f(o + j, ia, ib);
    for (int ax = rank - 2; ax >= 0; --ax) {
      base_a += plan.stride_a[ax];
      base_b += plan.stride_b[ax];
      if (++counter[ax] < plan.out[ax]) break;
      base_a -= plan.stride_a[ax] * plan.out[ax];
      base_b -= plan.stride_b[ax] * plan.out[ax];
      counter[ax] = 0;
    }
  }
}

template <typename T, typename Fwd, typename GradA, typename GradB>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* name, Fwd fwd, GradA grad_a, GradB grad_b) {
  BroadcastPlan plan = plan_broadcast(a.shape(), b.shape());
  std::vector<T> out(static_cast<std::size_t>(shape_numel(plan.out)));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  visit_broadcast(plan, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) { out[o] = fwd(pa[ia], pb[ib]); });
  Shape shape = plan.out;
  return make_result<T>(std::move(shape), std::move(out), {&a, &b}, name, [plan, grad_a, grad_b](detail::Node<T>& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    const T* g = self.grad.data();
    const T* xa = na.data.data();
    const T* xb = nb.data.data();
    const T* y = self.data.data();
    if (na.requires_grad) {
      T* ga = na.ensure_grad().data();
      visit_broadcast(plan, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
        ga[ia] += grad_a(g[o], xa[ia], xb[ib], y[o]);
      });
    }
    if (nb.requires_grad) {
      T* gb = nb.ensure_grad().data();
      visit_broadcast(plan, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
        gb[ib] += grad_b(g[o], xa[ia], xb[ib], y[o]);
      });
    }
  });
}

// dfdx(x, y) gives the local derivative given input and output.
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary_op(const Tensor<T>& x, const char* name, Fwd fwd, Deriv dfdx) {
  std::vector<T> out(x.data().size());
  const T* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(px[i]);
  return make_result<T>(x.shape(), std::move(out), {&x}, name, [dfdx](detail::Node<T>& self) {
    auto& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    T* gx = nx.ensure_grad().data();
    const T* g = self.grad.data();
    const T* xs = nx.data.data();
    const T* ys = self.data.data();
    for (std::size_t i = 0; i < self.data.size(); ++i) gx[i] += g[i] * dfdx(xs[i], ys[i]);
  });
}

struct AxisSplit {
  std::int64_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void accumulate(std::vector<float>& dst, const float* src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}
void accumulate(std::vector<double>& dst, const double* src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::int64_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::int64_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = ea == 1 ? eb : ea;
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "add", [](T x, T y) { return x + y; }, [](T g, T, T, T) { return g; }, [](T g, T, T, T) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T g, T, T, T) { return g; }, [](T g, T, T, T) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T g, T, T y, T) { return g * y; },
      [](T g, T x, T, T) { return g * x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      a, b, "div", [](T x, T y) { return x / y; }, [](T g, T, T y, T) { return g / y; },
      [](T g, T, T y, T out) { return -g * out / y; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  return unary_op(x, "add_scalar", [value](T v) { return v + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary_op(x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return scale(x, T(-1));
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary_op(x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return unary_op(x, "sqrt", [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> rsqrt(const Tensor<T>& x) {
  return unary_op(x, "rsqrt", [](T v) { return T(1) / std::sqrt(v); }, [](T v, T y) { return T(-0.5) * y / v; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary_op(x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return unary_op(x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return unary_op(
      x, "gelu", [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        return cdf + v * pdf;
      });
}

template <typename T>
Tensor<T> geglu(const Tensor<T>& gate, const Tensor<T>& value) {
  if (gate.shape() != value.shape()) {
    throw ShapeError("geglu halves differ: " + shape_str(gate.shape()) + " vs " + shape_str(value.shape()));
  }
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  const T* a = gate.data().data();
  const T* b = value.data().data();
  std::vector<T> out(gate.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * a[i] * (T(1) + std::erf(a[i] * inv_sqrt2)) * b[i];
  return make_result<T>(gate.shape(), std::move(out), {&gate, &value}, "geglu", [](detail::Node<T>& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    const T* g = self.grad.data();
    const T* a = na.data.data();
    const T* b = nb.data.data();
    T* ga = na.requires_grad ? na.ensure_grad().data() : nullptr;
    T* gb = nb.requires_grad ? nb.ensure_grad().data() : nullptr;
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      const T cdf = T(0.5) * (T(1) + std::erf(a[i] * inv_sqrt2));
      if (ga) ga[i] += g[i] * b[i] * (cdf + a[i] * inv_sqrt2pi * std::exp(T(-0.5) * a[i] * a[i]));
      if (gb) gb[i] += g[i] * a[i] * cdf;
    }
  });
}

template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& scale, double eps) {
  if (x.rank() < 1) throw ShapeError("rms_norm needs at least one axis");
  const std::int64_t d = x.shape().back(), rows = x.numel() / std::max<std::int64_t>(d, 1);
  std::int64_t groups = 1;
  if (scale.numel() != d) {
    groups = x.extent(0);
    if (scale.numel() != groups * d || scale.shape().back() != d) {
      throw ShapeError("rms_norm scale " + shape_str(scale.shape()) + " does not fit input " + shape_str(x.shape()));
    }
  }
  const std::int64_t per_group = rows / groups;
  const T* px = x.data().data();
  const T* ps = scale.data().data();
  std::vector<T> out(x.data().size());
  auto inv = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = px + r * d;
    T acc = 0;
    for (std::int64_t c = 0; c < d; ++c) acc += xr[c] * xr[c];
    const T ir = T(1) / std::sqrt(acc / static_cast<T>(d) + static_cast<T>(eps));
    (*inv)[r] = ir;
    const T* sr = ps + (r / per_group) * d;
    T* yr = out.data() + r * d;
    for (std::int64_t c = 0; c < d; ++c) yr[c] = xr[c] * ir * sr[c];
  }
  return make_result<T>(x.shape(), std::move(out), {&x, &scale}, "rms_norm",
                        [inv, d, rows, per_group](detail::Node<T>& self) {
    auto& nx = *self.parents[0];
    auto& ns = *self.parents[1];
    const T* g = self.grad.data();
    const T* px = nx.data.data();
    const T* ps = ns.data.data();
    T* gx = nx.requires_grad ? nx.ensure_grad().data() : nullptr;
    T* gs = ns.requires_grad ? ns.ensure_grad().data() : nullptr;
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* xr = px + r * d;
      const T* gr = g + r * d;
      const T* sr = ps + (r / per_group) * d;
      const T ir = (*inv)[r];
      if (gs) {
        T* gsr = gs + (r / per_group) * d;
        for (std::int64_t c = 0; c < d; ++c) gsr[c] += gr[c] * xr[c] * ir;
      }
      if (gx) {
        T proj = 0;
        for (std::int64_t c = 0; c < d; ++c) proj += gr[c] * sr[c] * xr[c];
        const T k = proj * ir * ir * ir / static_cast<T>(d);
        T* gxr = gx + r * d;
        for (std::int64_t c = 0; c < d; ++c) gxr[c] += ir * gr[c] * sr[c] - xr[c] * k;
      }
    }
  });
}

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, double eps) {
  if (x.rank() < 1) throw ShapeError("l2_normalize needs at least one axis");
  const std::int64_t d = x.shape().back(), rows = x.numel() / std::max<std::int64_t>(d, 1);
  const T* px = x.data().data();
  std::vector<T> out(x.data().size());
  auto inv = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = px + r * d;
    T acc = 0;
    for (std::int64_t c = 0; c < d; ++c) acc += xr[c] * xr[c];
    const T ir = T(1) / std::sqrt(acc + static_cast<T>(eps));
    (*inv)[r] = ir;
    for (std::int64_t c = 0; c < d; ++c) out[r * d + c] = xr[c] * ir;
  }
  return make_result<T>(x.shape(), std::move(out), {&x}, "l2_normalize", [inv, d, rows](detail::Node<T>& self) {
    auto& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    const T* g = self.grad.data();
    const T* px = nx.data.data();
    T* gx = nx.ensure_grad().data();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* xr = px + r * d;
      const T* gr = g + r * d;
      const T ir = (*inv)[r];
      T proj = 0;
      for (std::int64_t c = 0; c < d; ++c) proj += gr[c] * xr[c];
      const T k = proj * ir * ir * ir;
      for (std::int64_t c = 0; c < d; ++c) gx[r * d + c] += ir * gr[c] - xr[c] * k;
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (const T v : x.data()) total += v;
  return make_result<T>(Shape{}, std::vector<T>{total}, {&x}, "sum", [](detail::Node<T>& self) {
    auto& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    const T g = self.grad[0];
    for (auto& v : nx.ensure_grad()) v += g;
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, int axis, bool keepdim) {
  axis = normalize_axis(axis, x.rank());
  const AxisSplit s = split_axis(x.shape(), axis);
  if (s.len == 0) throw ShapeError("sum over an empty axis");
  std::vector<T> out(static_cast<std::size_t>(s.outer * s.inner), T(0));
  const T* px = x.data().data();
  for (std::int64_t o = 0; o < s.outer; ++o)
    for (std::int64_t l = 0; l < s.len; ++l)
      for (std::int64_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += px[(o * s.len + l) * s.inner + i];
  Shape shape = x.shape();
  if (keepdim) {
    shape[axis] = 1;
  } else {
    shape.erase(shape.begin() + axis);
  }
  return make_result<T>(std::move(shape), std::move(out), {&x}, "sum_axis", [s](detail::Node<T>& self) {
    auto& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    T* gx = nx.ensure_grad().data();
    const T* g = self.grad.data();
    for (std::int64_t o = 0; o < s.outer; ++o)
      for (std::int64_t l = 0; l < s.len; ++l)
        for (std::int64_t i = 0; i < s.inner; ++i) gx[(o * s.len + l) * s.inner + i] += g[o * s.inner + i];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, int axis, bool keepdim) {
  const auto len = x.extent(axis);
  if (len == 0) throw ShapeError("mean over an empty axis");
  return scale(sum(x, axis, keepdim), T(1) / static_cast<T>(len));
}

template <typename T>
Tensor<T> variance(const Tensor<T>& x) {
  const Tensor<T> centered = sub(x, mean(x));
  return mean(square(centered));
}

template <typename T>
Tensor<T> variance(const Tensor<T>& x, int axis, bool keepdim) {
  const Tensor<T> centered = sub(x, mean(x, axis, true));
  return mean(square(centered), axis, keepdim);
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul expects rank-2 operands");
  const auto m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  kernel_threads();
  std::vector<T> out(static_cast<std::size_t>(m * n));
  MutMap<T>(out.data(), m, n).noalias() = ConstMap<T>(a.data().data(), m, k) * ConstMap<T>(b.data().data(), k, n);
  clear_upper_state();
  return make_result<T>(Shape{m, n}, std::move(out), {&a, &b}, "matmul", [m, k, n](detail::Node<T>& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    ConstMap<T> g(self.grad.data(), m, n);
    if (na.requires_grad) {
      MutMap<T>(na.ensure_grad().data(), m, k).noalias() += g * ConstMap<T>(nb.data.data(), k, n).transpose();
      clear_upper_state();
    }
    if (nb.requires_grad) {
      MutMap<T>(nb.ensure_grad().data(), k, n).noalias() += ConstMap<T>(na.data.data(), m, k).transpose() * g;
      clear_upper_state();
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight) {
  if (weight.rank() != 2 || x.rank() < 1) throw ShapeError("linear expects weight[out,in] and x[..., in]");
  const auto out_f = weight.shape()[0], in_f = weight.shape()[1];
  if (x.shape().back() != in_f) {
    throw ShapeError("linear input width " + std::to_string(x.shape().back()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  const auto rows = x.numel() / std::max<std::int64_t>(in_f, 1);
  kernel_threads();
  std::vector<T> out(static_cast<std::size_t>(rows * out_f));
  MutMap<T>(out.data(), rows, out_f).noalias() =
      ConstMap<T>(x.data().data(), rows, in_f) * ConstMap<T>(weight.data().data(), out_f, in_f).transpose();
  clear_upper_state();
  Shape shape = x.shape();
  shape.back() = out_f;
  return make_result<T>(std::move(shape), std::move(out), {&x, &weight}, "linear",
                        [rows, in_f, out_f](detail::Node<T>& self) {
                          auto& nx = *self.parents[0];
                          auto& nw = *self.parents[1];
                          ConstMap<T> g(self.grad.data(), rows, out_f);
                          if (nx.requires_grad) {
                            MutMap<T>(nx.ensure_grad().data(), rows, in_f).noalias() +=
                                g * ConstMap<T>(nw.data.data(), out_f, in_f);
                            clear_upper_state();
                          }
                          if (nw.requires_grad) {
                            MutMap<T>(nw.ensure_grad().data(), out_f, in_f).noalias() +=
                                g.transpose() * ConstMap<T>(nx.data.data(), rows, in_f);
                            clear_upper_state();
                          }
                        });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  axis = normalize_axis(axis, x.rank());
  const AxisSplit s = split_axis(x.shape(), axis);
  if (s.len == 0) throw ShapeError("softmax over an empty axis");
  std::vector<T> out(x.data().size());
  const T* px = x.data().data();
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t i = 0; i < s.inner; ++i) {
      const std::int64_t base = o * s.len * s.inner + i;
      T mx = px[base];
      for (std::int64_t l = 1; l < s.len; ++l) mx = std::max(mx, px[base + l * s.inner]);
      T z = 0;
      for (std::int64_t l = 0; l < s.len; ++l) {
        const T e = std::exp(px[base + l * s.inner] - mx);
        out[base + l * s.inner] = e;
        z += e;
      }
      for (std::int64_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= z;
    }
  }
  return make_result<T>(x.shape(), std::move(out), {&x}, "softmax", [s](detail::Node<T>& self) {
    auto& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    T* gx = nx.ensure_grad().data();
    const T* g = self.grad.data();
    const T* y = self.data.data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t i = 0; i < s.inner; ++i) {
        const std::int64_t base = o * s.len * s.inner + i;
        T dot = 0;
        for (std::int64_t l = 0; l < s.len; ++l) dot += g[base + l * s.inner] * y[base + l * s.inner];
        for (std::int64_t l = 0; l < s.len; ++l) {
          const auto idx = base + l * s.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " into " + shape_str(shape));
  }
  return make_result<T>(std::move(shape), x.to_vector(), {&x}, "reshape", [](detail::Node<T>& self) {
    auto& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    // Our gradient is released after this call, so the first writer can take it.
    if (nx.grad.empty()) {
      nx.grad = std::move(self.grad);
    } else {
      accumulate(nx.grad, self.grad.data());
    }
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& order) {
  const int rank = x.rank();
  if (static_cast<int>(order.size()) != rank) throw ShapeError("permute order length does not match rank");
  std::vector<bool> used(rank, false);
  for (const int ax : order) {
    if (ax < 0 || ax >= rank || used[ax]) throw ShapeError("permute order is not a permutation");
    used[ax] = true;
  }
  const auto in_strides = contiguous_strides(x.shape());
  Shape out_shape(rank);
  std::vector<std::int64_t> gather_strides(rank);
  for (int i = 0; i < rank; ++i) {
    out_shape[i] = x.shape()[order[i]];
    gather_strides[i] = in_strides[order[i]];
  }
  // index_map[o] = source offset of output element o.
  const std::int64_t total = x.numel();
  auto index_map = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(total));
  if (total > 0) {
    std::vector<std::int64_t> counter(rank, 0);
    std::int64_t src = 0;
    for (std::int64_t o = 0; o < total; ++o) {
      (*index_map)[o] = src;
      for (int ax = rank - 1; ax >= 0; --ax) {
        src += gather_strides[ax];
        if (++counter[ax] < out_shape[ax]) break;
        src -= gather_strides[ax] * out_shape[ax];
        counter[ax] = 0;
      }
    }
  }
  std::vector<T> out(static_cast<std::size_t>(total));
  const T* px = x.data().data();
  for (std::int64_t o = 0; o < total; ++o) out[o] = px[(*index_map)[o]];
  return make_result<T>(std::move(out_shape), std::move(out), {&x}, "permute", [index_map](detail::Node<T>& self) {
    auto& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    T* gx = nx.ensure_grad().data();
    const T* g = self.grad.data();
    for (std::size_t o = 0; o < index_map->size(); ++o) gx[(*index_map)[o]] += g[o];
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const int rank = parts[0].rank();
  axis = normalize_axis(axis, rank);
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw ShapeError("concat rank mismatch");
    for (int i = 0; i < rank; ++i) {
      if (i != axis && p.shape()[i] != parts[0].shape()[i]) {
        throw ShapeError("concat extents differ off-axis: " + shape_str(p.shape()) + " vs " +
                         shape_str(parts[0].shape()));
      }
    }
    out_shape[axis] += p.shape()[axis];
  }
  const AxisSplit s = split_axis(out_shape, axis);
  std::vector<std::int64_t> lens;
  for (const auto& p : parts) lens.push_back(p.shape()[axis]);
  std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));
  std::int64_t start = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const T* src = parts[pi].data().data();
    const std::int64_t chunk = lens[pi] * s.inner;
    for (std::int64_t o = 0; o < s.outer; ++o) {
      std::copy(src + o * chunk, src + (o + 1) * chunk, out.begin() + (o * s.len + start) * s.inner);
    }
    start += lens[pi];
  }
  return make_result<T>(std::move(out_shape), std::move(out), parts, "concat", [s, lens](detail::Node<T>& self) {
    std::int64_t begin = 0;
    for (std::size_t pi = 0; pi < lens.size(); ++pi) {
      auto& np = *self.parents[pi];
      const std::int64_t chunk = lens[pi] * s.inner;
      if (np.requires_grad) {
        T* gp = np.ensure_grad().data();
        for (std::int64_t o = 0; o < s.outer; ++o) {
          const T* g = self.grad.data() + (o * s.len + begin) * s.inner;
          for (std::int64_t i = 0; i < chunk; ++i) gp[o * chunk + i] += g[i];
        }
      }
      begin += lens[pi];
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t stop) {
  axis = normalize_axis(axis, x.rank());
  const AxisSplit s = split_axis(x.shape(), axis);
  if (start < 0 || stop > s.len || start > stop) {
    throw ShapeError("slice [" + std::to_string(start) + "," + std::to_string(stop) + ") out of range for extent " +
                     std::to_string(s.len));
  }
  const std::int64_t len = stop - start;
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  std::vector<T> out(static_cast<std::size_t>(s.outer * len * s.inner));
  const T* px = x.data().data();
  for (std::int64_t o = 0; o < s.outer; ++o) {
    const T* src = px + (o * s.len + start) * s.inner;
    std::copy(src, src + len * s.inner, out.begin() + o * len * s.inner);
  }
  return make_result<T>(std::move(out_shape), std::move(out), {&x}, "slice", [s, start, len](detail::Node<T>& self) {
    auto& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    T* gx = nx.ensure_grad().data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      const T* g = self.grad.data() + o * len * s.inner;
      T* dst = gx + (o * s.len + start) * s.inner;
      for (std::int64_t i = 0; i < len * s.inner; ++i) dst[i] += g[i];
    }
  });
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, const std::vector<std::int64_t>& sizes, int axis) {
  axis = normalize_axis(axis, x.rank());
  const std::int64_t total = std::accumulate(sizes.begin(), sizes.end(), std::int64_t{0});
  if (total != x.shape()[axis]) {
    throw ShapeError("split sizes sum to " + std::to_string(total) + " but extent is " +
                     std::to_string(x.shape()[axis]));
  }
  std::vector<Tensor<T>> parts;
  std::int64_t start = 0;
  for (const auto size : sizes) {
    parts.push_back(slice(x, axis, start, start + size));
    start += size;
  }
  return parts;
}

template <typename T>
Tensor<T> roll(const Tensor<T>& x, int axis, std::int64_t shift) {
  axis = normalize_axis(axis, x.rank());
  const AxisSplit s = split_axis(x.shape(), axis);
  if (s.len == 0) return reshape(x, x.shape());
  const std::int64_t k = ((shift % s.len) + s.len) % s.len;
  std::vector<T> out(x.data().size());
  const T* px = x.data().data();
  for (std::int64_t o = 0; o < s.outer; ++o)
    for (std::int64_t l = 0; l < s.len; ++l) {
      const std::int64_t dst = (l + k) % s.len;
      std::copy(px + (o * s.len + l) * s.inner, px + (o * s.len + l + 1) * s.inner,
                out.begin() + (o * s.len + dst) * s.inner);
    }
  return make_result<T>(x.shape(), std::move(out), {&x}, "roll", [s, k](detail::Node<T>& self) {
    auto& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    T* gx = nx.ensure_grad().data();
    const T* g = self.grad.data();
    for (std::int64_t o = 0; o < s.outer; ++o)
      for (std::int64_t l = 0; l < s.len; ++l) {
        const std::int64_t dst = (l + k) % s.len;
        for (std::int64_t i = 0; i < s.inner; ++i)
          gx[(o * s.len + l) * s.inner + i] += g[(o * s.len + dst) * s.inner + i];
      }
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::int64_t>& ids) {
  if (table.rank() != 2) throw ShapeError("gather_rows expects a rank-2 table");
  const auto rows = table.shape()[0], width = table.shape()[1];
  std::vector<T> out(ids.size() * static_cast<std::size_t>(width));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= rows) {
      throw ShapeError("row id " + std::to_string(ids[i]) + " out of range for table with " + std::to_string(rows) +
                       " rows");
    }
    std::copy_n(table.data().data() + ids[i] * width, width, out.begin() + static_cast<std::int64_t>(i) * width);
  }
  return make_result<T>(Shape{static_cast<std::int64_t>(ids.size()), width}, std::move(out), {&table}, "gather_rows",
                        [ids, width](detail::Node<T>& self) {
                          auto& nt = *self.parents[0];
                          if (!nt.requires_grad) return;
                          T* gt = nt.ensure_grad().data();
                          for (std::size_t i = 0; i < ids.size(); ++i)
                            for (std::int64_t c = 0; c < width; ++c)
                              gt[ids[i] * width + c] += self.grad[i * width + c];
                        });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, RngStream& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must lie in [0, 1)");
  if (p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.data().size());
  for (auto& m : mask) m = rng.uniform() >= p ? keep_scale : T(0);
  const Tensor<T> mask_t(x.shape(), std::move(mask));
  return mul(x, mask_t);
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::int64_t f) {
  if (x.rank() != 4) throw ShapeError("pixel_unshuffle expects [B,H,W,C]");
  const auto b = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
  if (f < 1 || h % f != 0 || w % f != 0) {
    throw ShapeError("pixel_unshuffle factor " + std::to_string(f) + " does not divide " + shape_str(x.shape()));
  }
  const auto t = reshape(x, {b, h / f, f, w / f, f, c});
  const auto p = permute(t, {0, 1, 3, 2, 4, 5});
  return reshape(p, {b, h / f, w / f, f * f * c});
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::int64_t f) {
  if (x.rank() != 4) throw ShapeError("pixel_shuffle expects [B,H,W,C]");
  const auto b = x.shape()[0], h = x.shape()[1], w = x.shape()[2], cf = x.shape()[3];
  if (f < 1 || cf % (f * f) != 0) {
    throw ShapeError("pixel_shuffle factor " + std::to_string(f) + " does not divide channels of " +
                     shape_str(x.shape()));
  }
  const auto c = cf / (f * f);
  const auto t = reshape(x, {b, h, w, f, f, c});
  const auto p = permute(t, {0, 1, 3, 2, 4, 5});
  return reshape(p, {b, h * f, w * f, c});
}

template <typename T>
Tensor<T> rng_fill(const Shape& shape, Distribution dist, RngStream& stream) {
  std::vector<T> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = static_cast<T>(dist == Distribution::uniform01 ? stream.uniform() : stream.normal());
  return Tensor<T>(shape, std::move(values));
}

#define HDIT_INSTANTIATE_OPS(T)                                                                       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                                                      \
  template Tensor<T> neg(const Tensor<T>&);                                                           \
  template Tensor<T> square(const Tensor<T>&);                                                        \
  template Tensor<T> sqrt(const Tensor<T>&);                                                          \
  template Tensor<T> rsqrt(const Tensor<T>&);                                                         \
  template Tensor<T> exp(const Tensor<T>&);                                                           \
  template Tensor<T> log(const Tensor<T>&);                                                           \
  template Tensor<T> gelu(const Tensor<T>&);                                                          \
  template Tensor<T> geglu(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> rms_norm(const Tensor<T>&, const Tensor<T>&, double);                            \
  template Tensor<T> l2_normalize(const Tensor<T>&, double);                                          \
  template Tensor<T> sum(const Tensor<T>&);                                                           \
  template Tensor<T> sum(const Tensor<T>&, int, bool);                                                \
  template Tensor<T> mean(const Tensor<T>&);                                                          \
  template Tensor<T> mean(const Tensor<T>&, int, bool);                                               \
  template Tensor<T> variance(const Tensor<T>&);                                                      \
  template Tensor<T> variance(const Tensor<T>&, int, bool);                                           \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> softmax(const Tensor<T>&, int);                                                  \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);                              \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                      \
  template std::vector<Tensor<T>> split(const Tensor<T>&, const std::vector<std::int64_t>&, int);     \
  template Tensor<T> slice(const Tensor<T>&, int, std::int64_t, std::int64_t);                        \
  template Tensor<T> roll(const Tensor<T>&, int, std::int64_t);                                       \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::int64_t>&);                 \
  template Tensor<T> dropout(const Tensor<T>&, double, RngStream&);                                   \
  template Tensor<T> pixel_unshuffle(const Tensor<T>&, std::int64_t);                                 \
  template Tensor<T> pixel_shuffle(const Tensor<T>&, std::int64_t);                                   \
  template Tensor<T> rng_fill(const Shape&, Distribution, RngStream&);

HDIT_INSTANTIATE_OPS(float)
HDIT_INSTANTIATE_OPS(double)

}  // namespace hdit
