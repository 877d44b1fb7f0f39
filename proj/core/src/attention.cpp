// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/attention.hpp"

#include <Eigen/Core>
#if defined(__AVX__)
#include <immintrin.h>
#endif

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "hdit/error.hpp"
#include "hdit/parallel.hpp"

namespace hdit {

std::vector<std::int32_t> AttentionPattern::keys_of(std::int64_t query) const {
  std::vector<std::int32_t> out;
  if (dense) {
    out.resize(static_cast<std::size_t>(tokens));
    for (std::int64_t j = 0; j < tokens; ++j) out[j] = static_cast<std::int32_t>(j);
  } else {
    out.assign(keys.begin() + offsets[query], keys.begin() + offsets[query + 1]);
  }
  return out;
}

AttentionPattern AttentionPattern::global(std::int64_t tokens) {
  AttentionPattern p;
  p.tokens = tokens;
  p.dense = true;
  return p;
}

AttentionPattern AttentionPattern::neighborhood(std::int64_t h, std::int64_t w, std::int64_t kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("neighborhood kernel must be odd, got " + std::to_string(kernel));
  AttentionPattern p;
  p.tokens = h * w;
  p.offsets.reserve(static_cast<std::size_t>(p.tokens + 1));
  p.offsets.push_back(0);
  const std::int64_t kh = std::min(kernel, h), kw = std::min(kernel, w);
  const std::int64_t half = kernel / 2;
  for (std::int64_t r = 0; r < h; ++r) {
    const std::int64_t r0 = std::clamp(r - half, std::int64_t{0}, h - kh);
    for (std::int64_t c = 0; c < w; ++c) {
      const std::int64_t c0 = std::clamp(c - half, std::int64_t{0}, w - kw);
      for (std::int64_t rr = r0; rr < r0 + kh; ++rr)
        for (std::int64_t cc = c0; cc < c0 + kw; ++cc) p.keys.push_back(static_cast<std::int32_t>(rr * w + cc));
      p.offsets.push_back(static_cast<std::int64_t>(p.keys.size()));
    }
  }
  return p;
}

AttentionPattern AttentionPattern::windows(std::int64_t h, std::int64_t w, std::int64_t window, std::int64_t shift) {
  if (window < 1 || h % window != 0 || w % window != 0) {
    throw ConfigError("window " + std::to_string(window) + " does not divide " + std::to_string(h) + "x" +
                      std::to_string(w));
  }
  const std::int64_t groups_c = w / window;
  auto group_of = [&](std::int64_t r, std::int64_t c) {
    const std::int64_t rs = ((r - shift) % h + h) % h, cs = ((c - shift) % w + w) % w;
    return (rs / window) * groups_c + cs / window;
  };
  std::vector<std::vector<std::int32_t>> members(static_cast<std::size_t>((h / window) * groups_c));
  for (std::int64_t r = 0; r < h; ++r)
    for (std::int64_t c = 0; c < w; ++c) members[group_of(r, c)].push_back(static_cast<std::int32_t>(r * w + c));
  AttentionPattern p;
  p.tokens = h * w;
  p.offsets.push_back(0);
  for (std::int64_t r = 0; r < h; ++r)
    for (std::int64_t c = 0; c < w; ++c) {
      const auto& m = members[group_of(r, c)];
      p.keys.insert(p.keys.end(), m.begin(), m.end());
      p.offsets.push_back(static_cast<std::int64_t>(p.keys.size()));
    }
  return p;
}

TokenPositions TokenPositions::grid(std::int64_t h, std::int64_t w) {
  TokenPositions pos;
  pos.row.reserve(static_cast<std::size_t>(h * w));
  pos.col.reserve(static_cast<std::size_t>(h * w));
  for (std::int64_t r = 0; r < h; ++r)
    for (std::int64_t c = 0; c < w; ++c) {
      pos.row.push_back(r);
      pos.col.push_back(c);
    }
  return pos;
}

RopeTable RopeTable::build(const TokenPositions& positions, std::int64_t head_dim, double base) {
  if (head_dim < 4 || head_dim % 4 != 0) {
    throw ConfigError("axial RoPE needs a head width divisible by 4, got " + std::to_string(head_dim));
  }
  RopeTable t;
  t.head_dim = head_dim;
  t.angles = head_dim / 4;
  t.tokens = static_cast<std::int64_t>(positions.row.size());
  const std::int64_t row_angles = (t.angles + 1) / 2;
  const std::int64_t col_angles = t.angles - row_angles;
  std::vector<double> freq(static_cast<std::size_t>(t.angles));
  for (std::int64_t m = 0; m < row_angles; ++m) freq[m] = std::pow(base, -static_cast<double>(m) / row_angles);
  for (std::int64_t m = 0; m < col_angles; ++m)
    freq[row_angles + m] = std::pow(base, -static_cast<double>(m) / col_angles);
  t.cos.resize(static_cast<std::size_t>(t.tokens * t.angles));
  t.sin.resize(t.cos.size());
  for (std::int64_t i = 0; i < t.tokens; ++i) {
    for (std::int64_t j = 0; j < t.angles; ++j) {
      const double coord = static_cast<double>(j < row_angles ? positions.row[i] : positions.col[i]);
      const double theta = coord * freq[j];
      t.cos[i * t.angles + j] = std::cos(theta);
      t.sin[i * t.angles + j] = std::sin(theta);
    }
  }
  return t;
}

namespace {

struct HeadLayout {
  std::int64_t batch, tokens, heads, dim;
};

HeadLayout check_heads(const Shape& s, const char* what) {
  if (s.size() != 4) throw ShapeError(std::string(what) + " expects [B, n, heads, dh], got " + shape_str(s));
  return {s[0], s[1], s[2], s[3]};
}

}  // namespace

template <typename T>
Tensor<T> apply_axial_rope(const Tensor<T>& x, const RopeTable& table) {
  const HeadLayout L = check_heads(x.shape(), "apply_axial_rope");
  if (L.dim != table.head_dim || L.tokens != table.tokens) {
    throw ShapeError("RoPE table built for " + std::to_string(table.tokens) + " tokens x dh " +
                     std::to_string(table.head_dim) + ", input is " + shape_str(x.shape()));
  }
  const std::int64_t a = table.angles;
  auto table_ptr = std::make_shared<RopeTable>(table);
  std::vector<T> out(x.data().begin(), x.data().end());
  const T* px = x.data().data();
  for (std::int64_t b = 0; b < L.batch; ++b)
    for (std::int64_t i = 0; i < L.tokens; ++i) {
      const double* cs = table.cos.data() + i * a;
      const double* sn = table.sin.data() + i * a;
      for (std::int64_t hd = 0; hd < L.heads; ++hd) {
        const std::int64_t base = ((b * L.tokens + i) * L.heads + hd) * L.dim;
        for (std::int64_t j = 0; j < a; ++j) {
          const T x1 = px[base + j], x2 = px[base + j + a];
          const T c = static_cast<T>(cs[j]), s = static_cast<T>(sn[j]);
          out[base + j] = x1 * c - x2 * s;
          out[base + j + a] = x2 * c + x1 * s;
        }
      }
    }
  return make_result<T>(x.shape(), std::move(out), {&x}, "axial_rope", [L, table_ptr](detail::Node<T>& self) {
    auto& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    T* gx = nx.ensure_grad().data();
    const T* g = self.grad.data();
    const std::int64_t a = table_ptr->angles;
    for (std::int64_t b = 0; b < L.batch; ++b)
      for (std::int64_t i = 0; i < L.tokens; ++i) {
        const double* cs = table_ptr->cos.data() + i * a;
        const double* sn = table_ptr->sin.data() + i * a;
        for (std::int64_t hd = 0; hd < L.heads; ++hd) {
          const std::int64_t base = ((b * L.tokens + i) * L.heads + hd) * L.dim;
          for (std::int64_t j = 0; j < a; ++j) {
            const T g1 = g[base + j], g2 = g[base + j + a];
            const T c = static_cast<T>(cs[j]), s = static_cast<T>(sn[j]);
            gx[base + j] += g1 * c + g2 * s;
            gx[base + j + a] += g2 * c - g1 * s;
          }
          for (std::int64_t ch = 2 * a; ch < L.dim; ++ch) gx[base + ch] += g[base + ch];
        }
      }
  });
}

namespace {

inline std::int64_t key_at(const AttentionPattern& p, std::int64_t query, std::int64_t slot) {
  return p.dense ? slot : p.keys[p.offsets[query] + slot];
}

inline std::int64_t prob_offset(const AttentionPattern& p, std::int64_t query) {
  return p.dense ? query * p.tokens : p.offsets[query];
}

inline std::int64_t nnz(const AttentionPattern& p) { return p.dense ? p.tokens * p.tokens : p.offsets.back(); }

template <typename T>
using HeadMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void clear_upper_state() {
#if defined(__AVX__)
  _mm256_zeroupper();
#endif
}

// Copies head `hd` of batch `b` out of a [B, n, heads, dh] buffer.
template <typename T>
void gather_head(const HeadLayout& L, const T* src, std::int64_t b, std::int64_t hd, HeadMatrix<T>& dst) {
  dst.resize(L.tokens, L.dim);
  for (std::int64_t i = 0; i < L.tokens; ++i) {
    const T* row = src + ((b * L.tokens + i) * L.heads + hd) * L.dim;
    std::copy(row, row + L.dim, dst.data() + i * L.dim);
  }
}

template <typename T>
void scatter_add_head(const HeadLayout& L, const HeadMatrix<T>& src, std::int64_t b, std::int64_t hd, T* dst) {
  for (std::int64_t i = 0; i < L.tokens; ++i) {
    T* row = dst + ((b * L.tokens + i) * L.heads + hd) * L.dim;
    const T* s = src.data() + i * L.dim;
    for (std::int64_t c = 0; c < L.dim; ++c) row[c] += s[c];
  }
}

template <typename T>
inline T dot(const T* a, const T* b, std::int64_t n) {
  T acc = 0;
#pragma omp simd reduction(+ : acc)
  for (std::int64_t c = 0; c < n; ++c) acc += a[c] * b[c];
  return acc;
}

template <typename T>
inline void axpy(T w, const T* x, T* y, std::int64_t n) {
#pragma omp simd
  for (std::int64_t c = 0; c < n; ++c) y[c] += w * x[c];
}

template <typename T>
void softmax_row(T* row, std::int64_t count) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::int64_t s = 0; s < count; ++s) mx = std::max(mx, row[s]);
  T z = 0;
  for (std::int64_t s = 0; s < count; ++s) {
    row[s] = std::exp(row[s] - mx);
    z += row[s];
  }
  const T inv = T(1) / z;
  for (std::int64_t s = 0; s < count; ++s) row[s] *= inv;
}

// Fills probs[(b*heads+h)*nnz + slot] and, if out != nullptr, the attention output.
template <typename T>
void attention_forward(const HeadLayout& L, const T* q, const T* k, const T* v, const AttentionPattern& p, T* probs,
                       T* out) {
  const std::int64_t total_nnz = nnz(p);
  const std::int64_t pairs = L.batch * L.heads;
#pragma omp parallel for schedule(static) num_threads(kernel_threads())
  for (std::int64_t bh = 0; bh < pairs; ++bh) {
    const std::int64_t b = bh / L.heads, hd = bh % L.heads;
    HeadMatrix<T> qh, kh, vh, oh;
    gather_head(L, q, b, hd, qh);
    gather_head(L, k, b, hd, kh);
    T* pr = probs + bh * total_nnz;
    if (p.dense) {
      Eigen::Map<HeadMatrix<T>> logits(pr, L.tokens, L.tokens);
      logits.noalias() = qh * kh.transpose();
      clear_upper_state();
      for (std::int64_t i = 0; i < L.tokens; ++i) softmax_row(pr + i * L.tokens, L.tokens);
      if (!out) continue;
      gather_head(L, v, b, hd, vh);
      oh.noalias() = logits * vh;
      clear_upper_state();
    } else {
      for (std::int64_t i = 0; i < L.tokens; ++i) {
        const T* qi = qh.data() + i * L.dim;
        const std::int64_t count = p.key_count(i);
        T* pi = pr + prob_offset(p, i);
        for (std::int64_t s = 0; s < count; ++s) pi[s] = dot(qi, kh.data() + key_at(p, i, s) * L.dim, L.dim);
        softmax_row(pi, count);
      }
      if (!out) continue;
      gather_head(L, v, b, hd, vh);
      oh.setZero(L.tokens, L.dim);
      for (std::int64_t i = 0; i < L.tokens; ++i) {
        const T* pi = pr + prob_offset(p, i);
        T* oi = oh.data() + i * L.dim;
        for (std::int64_t s = 0; s < p.key_count(i); ++s) axpy(pi[s], vh.data() + key_at(p, i, s) * L.dim, oi, L.dim);
      }
    }
    for (std::int64_t i = 0; i < L.tokens; ++i) {
      std::copy(oh.data() + i * L.dim, oh.data() + (i + 1) * L.dim, out + ((b * L.tokens + i) * L.heads + hd) * L.dim);
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> pattern_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                            const AttentionPattern& pattern) {
  const HeadLayout L = check_heads(q.shape(), "pattern_attention");
  if (k.shape() != q.shape() || v.shape() != q.shape()) {
    throw ShapeError("q, k, v shapes differ: " + shape_str(q.shape()) + " " + shape_str(k.shape()) + " " +
                     shape_str(v.shape()));
  }
  if (pattern.tokens != L.tokens) throw ShapeError("attention pattern token count does not match input");
  const std::int64_t total_nnz = nnz(pattern);
  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(L.batch * L.heads * total_nnz));
  std::vector<T> out(q.data().size());
  attention_forward(L, q.data().data(), k.data().data(), v.data().data(), pattern, probs->data(), out.data());
  auto pat = std::make_shared<AttentionPattern>(pattern);
  return make_result<T>(q.shape(), std::move(out), {&q, &k, &v}, "pattern_attention",
                        [L, probs, pat, total_nnz](detail::Node<T>& self) {
    auto& nq = *self.parents[0];
    auto& nk = *self.parents[1];
    auto& nv = *self.parents[2];
    const T* g = self.grad.data();
    T* gq = nq.requires_grad ? nq.ensure_grad().data() : nullptr;
    T* gk = nk.requires_grad ? nk.ensure_grad().data() : nullptr;
    T* gv = nv.requires_grad ? nv.ensure_grad().data() : nullptr;
    const AttentionPattern& p = *pat;
    const std::int64_t pairs = L.batch * L.heads;
    // Heads are disjoint slices of every gradient buffer, so pairs never collide.
#pragma omp parallel for schedule(static) num_threads(kernel_threads())
    for (std::int64_t bh = 0; bh < pairs; ++bh) {
      const std::int64_t b = bh / L.heads, hd = bh % L.heads;
      const T* pr = probs->data() + bh * total_nnz;
      HeadMatrix<T> qh, kh, vh, gh, dq, dk, dv;
      gather_head(L, nq.data.data(), b, hd, qh);
      gather_head(L, nk.data.data(), b, hd, kh);
      gather_head(L, nv.data.data(), b, hd, vh);
      gather_head(L, g, b, hd, gh);
      dq.setZero(L.tokens, L.dim);
      dk.setZero(L.tokens, L.dim);
      dv.setZero(L.tokens, L.dim);
      if (p.dense) {
        Eigen::Map<const HeadMatrix<T>> P(pr, L.tokens, L.tokens);
        dv.noalias() = P.transpose() * gh;
        HeadMatrix<T> dp = gh * vh.transpose();
        clear_upper_state();
        for (std::int64_t i = 0; i < L.tokens; ++i) {
          T* row = dp.data() + i * L.tokens;
          const T* pi = pr + i * L.tokens;
          const T weighted = dot(pi, row, L.tokens);
          for (std::int64_t s = 0; s < L.tokens; ++s) row[s] = pi[s] * (row[s] - weighted);
        }
        dq.noalias() = dp * kh;
        dk.noalias() = dp.transpose() * qh;
        clear_upper_state();
      } else {
        std::vector<T> dlogit;
        for (std::int64_t i = 0; i < L.tokens; ++i) {
          const T* gi = gh.data() + i * L.dim;
          const std::int64_t count = p.key_count(i);
          const T* pi = pr + prob_offset(p, i);
          dlogit.resize(static_cast<std::size_t>(count));
          T weighted = 0;
          for (std::int64_t s = 0; s < count; ++s) {
            const std::int64_t j = key_at(p, i, s);
            dlogit[s] = dot(gi, vh.data() + j * L.dim, L.dim);
            weighted += pi[s] * dlogit[s];
            axpy(pi[s], gi, dv.data() + j * L.dim, L.dim);
          }
          for (std::int64_t s = 0; s < count; ++s) {
            const T ds = pi[s] * (dlogit[s] - weighted);
            const std::int64_t j = key_at(p, i, s);
            axpy(ds, kh.data() + j * L.dim, dq.data() + i * L.dim, L.dim);
            axpy(ds, qh.data() + i * L.dim, dk.data() + j * L.dim, L.dim);
          }
        }
      }
      if (gq) scatter_add_head(L, dq, b, hd, gq);
      if (gk) scatter_add_head(L, dk, b, hd, gk);
      if (gv) scatter_add_head(L, dv, b, hd, gv);
    }
  });
}

template <typename T>
std::vector<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k, const AttentionPattern& pattern) {
  const HeadLayout L = check_heads(q.shape(), "attention_weights");
  if (k.shape() != q.shape()) throw ShapeError("q and k shapes differ");
  if (pattern.tokens != L.tokens) throw ShapeError("attention pattern token count does not match input");
  const std::int64_t total_nnz = nnz(pattern);
  std::vector<T> probs(static_cast<std::size_t>(L.batch * L.heads * total_nnz));
  attention_forward<T>(L, q.data().data(), k.data().data(), nullptr, pattern, probs.data(), nullptr);
  std::vector<T> dense(static_cast<std::size_t>(L.batch * L.heads * L.tokens * L.tokens), T(0));
  for (std::int64_t bh = 0; bh < L.batch * L.heads; ++bh)
    for (std::int64_t i = 0; i < L.tokens; ++i)
      for (std::int64_t s = 0; s < pattern.key_count(i); ++s)
        dense[(bh * L.tokens + i) * L.tokens + key_at(pattern, i, s)] =
            probs[bh * total_nnz + prob_offset(pattern, i) + s];
  return dense;
}

template Tensor<float> apply_axial_rope(const Tensor<float>&, const RopeTable&);
template Tensor<double> apply_axial_rope(const Tensor<double>&, const RopeTable&);
template Tensor<float> pattern_attention(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                         const AttentionPattern&);
template Tensor<double> pattern_attention(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                          const AttentionPattern&);
template std::vector<float> attention_weights(const Tensor<float>&, const Tensor<float>&, const AttentionPattern&);
template std::vector<double> attention_weights(const Tensor<double>&, const Tensor<double>&, const AttentionPattern&);

}  // namespace hdit
