// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>

#include "hdit/attention.hpp"
#include "hdit/cost_model.hpp"
#include "hdit/diffusion.hpp"
#include "hdit/error.hpp"
#include "hdit/model.hpp"
#include "hdit/nn.hpp"
#include "hdit/ops.hpp"

namespace hdit::cli {
namespace {

using D = double;
using TD = Tensor<double>;

constexpr double kFdStep = 1e-5;
constexpr double kGradTol = 1e-4;
constexpr int kCoordsPerTensor = 16;

std::string num(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

template <typename T>
Tensor<T> randn(const Shape& shape, RngStream& rng, double scale = 1.0, bool requires_grad = false) {
  std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(rng.normal() * scale);
  return Tensor<T>(shape, std::move(v), requires_grad);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i] - b[i])));
  return m;
}

// Replaces every parameter with generic values so no gradient vanishes just
// because a projection starts at zero.
void scramble(const ParamList<D>& params, RngStream& rng) {
  for (const auto& p : params) {
    auto t = p.tensor;
    auto data = t.data_mut();
    const auto& shape = t.shape();
    const auto ends_with = [&](const std::string& suffix) {
      return p.name.size() >= suffix.size() && p.name.compare(p.name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    for (auto& x : data) {
      if (ends_with(".tau")) {
        x = 0.3 + 0.7 * rng.uniform();
      } else if (ends_with(".scale")) {
        x = 1.0 + 0.2 * rng.normal();
      } else if (ends_with(".f")) {
        x = rng.uniform();
      } else if (shape.size() == 2 && !ends_with("class_table")) {
        x = rng.normal() / std::sqrt(static_cast<double>(shape[1]));
      } else {
        x = rng.normal();
      }
    }
  }
}

struct Probe {
  std::string name;
  TD tensor;
};

struct FdReport {
  double worst = 0;
  std::string worst_name;
  std::int64_t coords = 0;
};

// Compares autodiff gradients with central differences on a sample of
// coordinates of each probe tensor. Relative error is taken on the vector of
// sampled coordinates: |a - n| / max(|a|, |n|).
FdReport fd_check(const std::function<TD()>& loss_fn, std::vector<Probe> probes, RngStream& rng) {
  for (auto& p : probes) p.tensor.zero_grad();
  loss_fn().backward();
  FdReport report;
  NoGradGuard no_grad;
  for (auto& p : probes) {
    const std::int64_t n = p.tensor.numel();
    std::vector<std::int64_t> coords;
    if (n <= kCoordsPerTensor) {
      for (std::int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < kCoordsPerTensor; ++i) coords.push_back(static_cast<std::int64_t>(rng.below(n)));
    }
    const bool has = p.tensor.has_grad();
    double diff2 = 0, a2 = 0, n2 = 0;
    auto data = p.tensor.data_mut();
    for (const auto c : coords) {
      const double analytic = has ? p.tensor.grad()[c] : 0.0;
      const double orig = data[c];
      data[c] = orig + kFdStep;
      const double fp = loss_fn().item();
      data[c] = orig - kFdStep;
      const double fm = loss_fn().item();
      data[c] = orig;
      const double numeric = (fp - fm) / (2 * kFdStep);
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double scale = std::sqrt(std::max(a2, n2));
    const double rel = scale > 1e-9 ? std::sqrt(diff2) / scale : std::sqrt(diff2);
    report.coords += static_cast<std::int64_t>(coords.size());
    if (rel >= report.worst) {
      report.worst = rel;
      report.worst_name = p.name;
    }
  }
  return report;
}

std::vector<Probe> probes_of(const ParamList<D>& params) {
  std::vector<Probe> out;
  for (const auto& p : params) out.push_back({p.name, p.tensor});
  return out;
}

// Weighted sum with a fixed random weight so every output element matters.
TD projection_loss(const TD& out, const TD& weights) { return sum(mul(out, weights)); }

class Collector {
 public:
  explicit Collector(std::string suite) : suite_(std::move(suite)) {}
  void add(std::string name, bool passed, std::string detail = {}) {
    results_.push_back({suite_, std::move(name), passed, std::move(detail)});
  }
  std::vector<CheckResult> take() { return std::move(results_); }

 private:
  std::string suite_;
  std::vector<CheckResult> results_;
};

ModelConfig toy_config() {
  ModelConfig c;
  c.in_channels = 3;
  c.patch_size = 2;
  c.levels = {LevelConfig{16, 1, {nn::AttentionKind::neighborhood, 3}, 0.0},
              LevelConfig{32, 1, {nn::AttentionKind::global, 7}, 0.0}};
  c.head_dim = 8;
  c.mapping_depth = 1;
  c.mapping_width = 16;
  c.num_classes = 2;
  c.resolution = 16;
  c.free_core_size = true;
  return c;
}

// ---------------------------------------------------------------------------

void grad_blocks(Collector& out) {
  RngStream init = RngStream::for_step(11, StreamPurpose::test, 0);
  RngStream rng = RngStream::for_step(11, StreamPurpose::test, 1);
  const std::int64_t b = 2, h = 3, w = 4, d = 16, cw = 8, hd = 8;
  const std::int64_t n = h * w;
  const TD cond = randn<D>({b, cw}, rng);

  auto record = [&](const std::string& name, const std::function<TD()>& f, std::vector<Probe> probes) {
    const FdReport r = fd_check(f, std::move(probes), rng);
    out.add(name, r.worst < kGradTol,
            "max rel err " + num(r.worst) + " (" + r.worst_name + ", " + std::to_string(r.coords) + " coords)");
  };

  {
    nn::Linear<D> lin(d, 5, false, init);
    TD x = randn<D>({b, n, d}, rng, 1.0, true);
    const TD wts = randn<D>({b, n, 5}, rng);
    ParamList<D> ps;
    lin.collect(ps, "linear");
    auto probes = probes_of(ps);
    probes.push_back({"x", x});
    record("linear", [&] { return projection_loss(lin(x), wts); }, probes);
  }
  {
    nn::RMSNorm<D> norm(d);
    TD x = randn<D>({b, n, d}, rng, 1.0, true);
    const TD wts = randn<D>({b, n, d}, rng);
    ParamList<D> ps;
    norm.collect(ps, "rms_norm");
    scramble(ps, rng);
    auto probes = probes_of(ps);
    probes.push_back({"x", x});
    record("rms_norm", [&] { return projection_loss(norm(x), wts); }, probes);
  }
  {
    nn::AdaRMSNorm<D> norm(d, cw, init);
    TD x = randn<D>({b, n, d}, rng, 1.0, true);
    TD c = randn<D>({b, cw}, rng, 1.0, true);
    const TD wts = randn<D>({b, n, d}, rng);
    ParamList<D> ps;
    norm.collect(ps, "ada_rms_norm");
    scramble(ps, rng);
    auto probes = probes_of(ps);
    probes.push_back({"x", x});
    probes.push_back({"cond", c});
    record("ada_rms_norm", [&] { return projection_loss(norm(x, c), wts); }, probes);
  }
  for (const auto kind : {nn::FeedForwardKind::geglu, nn::FeedForwardKind::gelu}) {
    nn::FeedForward<D> ffn(kind, d, cw, 0.0, init);
    TD x = randn<D>({b, n, d}, rng, 1.0, true);
    const TD wts = randn<D>({b, n, d}, rng);
    ParamList<D> ps;
    ffn.collect(ps, "ffn");
    scramble(ps, rng);
    auto probes = probes_of(ps);
    probes.push_back({"x", x});
    record("feedforward_" + to_string(kind), [&] { return projection_loss(ffn(x, cond, {}), wts); }, probes);
  }
  const std::vector<std::pair<std::string, nn::AttentionSpec>> specs = {
      {"global", {nn::AttentionKind::global, 0}},
      {"neighborhood", {nn::AttentionKind::neighborhood, 3}},
      {"swin_shifted", {nn::AttentionKind::swin, 2}},
  };
  const TD wts = randn<D>({b, 4 * 4, d}, rng);
  for (const auto& [label, spec] : specs) {
    const auto geo = nn::TokenGeometry::build(4, 4, spec, hd, 1);
    nn::SelfAttention<D> attn(d, hd, cw, init);
    TD x = randn<D>({b, 16, d}, rng, 1.0, true);
    ParamList<D> ps;
    attn.collect(ps, "attn");
    scramble(ps, rng);
    auto probes = probes_of(ps);
    probes.push_back({"x", x});
    record("attention_" + label, [&] { return projection_loss(attn(x, cond, geo), wts); }, probes);
  }
  {
    const auto geo = nn::TokenGeometry::build(4, 4, {nn::AttentionKind::neighborhood, 3}, hd);
    nn::HDiTBlock<D> block(d, hd, cw, nn::FeedForwardKind::geglu, 0.0, init);
    TD x = randn<D>({b, 16, d}, rng, 1.0, true);
    TD c = randn<D>({b, cw}, rng, 1.0, true);
    ParamList<D> ps;
    block.collect(ps, "block");
    scramble(ps, rng);
    auto probes = probes_of(ps);
    probes.push_back({"x", x});
    probes.push_back({"cond", c});
    record("hdit_block", [&] { return projection_loss(block(x, c, geo), wts); }, probes);
  }
  {
    nn::MappingNetwork<D> mapping(cw, 2, 3, init);
    const std::vector<double> sigma = {0.02, 0.7, 9.0};
    const std::vector<std::int64_t> ids = {0, -1, 2};
    const TD mw = randn<D>({3, cw}, rng);
    ParamList<D> ps;
    mapping.collect(ps, "mapping");
    scramble(ps, rng);
    record("mapping_network", [&] { return projection_loss(mapping(sigma, ids), mw); }, probes_of(ps));
  }
  {
    nn::TokenMerge<D> merge(4, 6, init);
    nn::TokenSplit<D> split(6, 4, init);
    nn::LerpSkip<D> skip;
    TD x = randn<D>({b, 4, 4, 4}, rng, 1.0, true);
    const TD mw = randn<D>({b, 2, 2, 6}, rng);
    const TD sw = randn<D>({b, 4, 4, 4}, rng);
    ParamList<D> ps;
    merge.collect(ps, "merge");
    auto probes = probes_of(ps);
    probes.push_back({"x", x});
    record("token_merge", [&] { return projection_loss(merge(x), mw); }, probes);

    TD y = randn<D>({b, 2, 2, 6}, rng, 1.0, true);
    ParamList<D> ps2;
    split.collect(ps2, "split");
    auto probes2 = probes_of(ps2);
    probes2.push_back({"x", y});
    record("token_split", [&] { return projection_loss(split(y), sw); }, probes2);

    TD s = randn<D>({b, 4, 4, 4}, rng, 1.0, true);
    TD u = randn<D>({b, 4, 4, 4}, rng, 1.0, true);
    ParamList<D> ps3;
    skip.collect(ps3, "skip");
    auto probes3 = probes_of(ps3);
    probes3.push_back({"skip_in", s});
    probes3.push_back({"up_in", u});
    record("lerp_skip", [&] { return projection_loss(skip(s, u), sw); }, probes3);
  }
  {
    nn::PatchEmbed<D> embed(2, 3, 8, init);
    TD img = randn<D>({b, 4, 6, 3}, rng, 1.0, true);
    const TD ew = randn<D>({b, 2, 3, 8}, rng);
    ParamList<D> ps;
    embed.collect(ps, "embed");
    auto probes = probes_of(ps);
    probes.push_back({"img", img});
    record("patch_embed", [&] { return projection_loss(embed(img), ew); }, probes);
  }
}

void grad_model(Collector& out) {
  RngStream rng = RngStream::for_step(12, StreamPurpose::test, 0);
  HDiTModel<D> model(toy_config(), 12);
  const ParamList<D> ps = model.parameters();
  scramble(ps, rng);
  TD x = randn<D>({2, 16, 16, 3}, rng, 1.0, true);
  const TD wts = randn<D>({2, 16, 16, 3}, rng);
  const std::vector<double> sigma = {0.3, 4.0};
  const std::vector<std::int64_t> ids = {1, -1};
  auto probes = probes_of(ps);
  probes.push_back({"x", x});
  const FdReport r = fd_check([&] { return projection_loss(model.forward(x, sigma, ids), wts); }, probes, rng);
  out.add("toy_model_16x16", r.worst < kGradTol,
          "max rel err " + num(r.worst) + " (" + r.worst_name + ", " + std::to_string(r.coords) + " coords over " +
              std::to_string(ps.size()) + " tensors)");
}

// ---------------------------------------------------------------------------

// Plain loop attention in binary64 over explicit key lists.
std::vector<double> loop_attention(const std::vector<double>& q, const std::vector<double>& k,
                                   const std::vector<double>& v, std::int64_t b, std::int64_t n, std::int64_t heads,
                                   std::int64_t dh, const std::function<bool(std::int64_t, std::int64_t)>& allowed,
                                   const std::vector<double>& inv_tau, bool cosine) {
  std::vector<double> o(q.size(), 0.0);
  auto at = [&](std::int64_t bi, std::int64_t t, std::int64_t hh) { return ((bi * n + t) * heads + hh) * dh; };
  for (std::int64_t bi = 0; bi < b; ++bi) {
    for (std::int64_t hh = 0; hh < heads; ++hh) {
      for (std::int64_t i = 0; i < n; ++i) {
        std::vector<double> logits(n, -INFINITY);
        double mx = -INFINITY;
        for (std::int64_t j = 0; j < n; ++j) {
          if (!allowed(i, j)) continue;
          double dot = 0, qq = 0, kk = 0;
          for (std::int64_t c = 0; c < dh; ++c) {
            const double a = q[at(bi, i, hh) + c], e = k[at(bi, j, hh) + c];
            dot += a * e;
            qq += a * a;
            kk += e * e;
          }
          if (cosine) dot /= std::sqrt(qq + 1e-6) * std::sqrt(kk + 1e-6);
          logits[j] = dot * inv_tau[hh];
          mx = std::max(mx, logits[j]);
        }
        double z = 0;
        for (std::int64_t j = 0; j < n; ++j) z += std::isinf(logits[j]) ? 0.0 : std::exp(logits[j] - mx);
        for (std::int64_t j = 0; j < n; ++j) {
          if (std::isinf(logits[j])) continue;
          const double p = std::exp(logits[j] - mx) / z;
          for (std::int64_t c = 0; c < dh; ++c) o[at(bi, i, hh) + c] += p * v[at(bi, j, hh) + c];
        }
      }
    }
  }
  return o;
}

void oracle_attention(Collector& out) {
  RngStream rng = RngStream::for_step(21, StreamPurpose::test, 0);

  double worst = 0;
  for (int c = 0; c < 20; ++c) {
    const std::int64_t b = 1 + static_cast<std::int64_t>(rng.below(2));
    const std::int64_t h = 1 + static_cast<std::int64_t>(rng.below(6));
    const std::int64_t w = 1 + static_cast<std::int64_t>(rng.below(6));
    const std::int64_t heads = 1 + static_cast<std::int64_t>(rng.below(2));
    const std::int64_t dh = 4 * (1 + static_cast<std::int64_t>(rng.below(2)));
    const Shape s{b, h * w, heads, dh};
    const auto q = randn<float>(s, rng), k = randn<float>(s, rng), v = randn<float>(s, rng);
    const std::int64_t kernel = 2 * std::max(h, w) - 1;
    worst = std::max(worst, max_abs_diff(nn::neighborhood_attention(q, k, v, h, w, kernel), nn::global_attention(q, k, v)));
  }
  out.add("neighborhood_covering_kernel_equals_global", worst < 1e-5, "20 cases, max abs diff " + num(worst));

  worst = 0;
  for (int c = 0; c < 20; ++c) {
    const std::int64_t side = 1 + static_cast<std::int64_t>(rng.below(6));
    const std::int64_t heads = 1 + static_cast<std::int64_t>(rng.below(2));
    const Shape s{1, side * side, heads, 8};
    const auto q = randn<float>(s, rng), k = randn<float>(s, rng), v = randn<float>(s, rng);
    const bool shifted = c % 2 == 1;
    worst = std::max(worst, max_abs_diff(nn::swin_attention(q, k, v, side, side, side, shifted),
                                         nn::global_attention(q, k, v)));
  }
  out.add("swin_full_window_equals_global", worst < 1e-5, "20 cases, max abs diff " + num(worst));

  double rel = 0;
  for (int c = 0; c < 20; ++c) {
    const std::int64_t b = 2, n = 5, heads = 3, dh = 8;
    const Shape s{b, n, heads, dh};
    const auto q = randn<D>(s, rng), k = randn<D>(s, rng), v = randn<D>(s, rng);
    std::vector<double> tau(heads), inv(heads);
    for (std::int64_t i = 0; i < heads; ++i) {
      tau[i] = 0.05 + rng.uniform();
      inv[i] = 1.0 / tau[i];
    }
    const TD tau_t({heads}, tau);
    const TD got = nn::cosine_attention(q, k, v, tau_t, AttentionPattern::global(n));
    const auto want = loop_attention(q.to_vector(), k.to_vector(), v.to_vector(), b, n, heads, dh,
                                     [](std::int64_t, std::int64_t) { return true; }, inv, true);
    double scale = 0;
    for (const double x : want) scale = std::max(scale, std::abs(x));
    rel = std::max(rel, max_abs_diff(got.data(), want) / scale);
  }
  out.add("cosine_attention_vs_loop_oracle", rel < 1e-5, "20 cases, max rel err " + num(rel));

  // Sparse kernel against a brute-force window mask.
  double nb = 0;
  for (int c = 0; c < 10; ++c) {
    const std::int64_t h = 2 + static_cast<std::int64_t>(rng.below(5));
    const std::int64_t w = 2 + static_cast<std::int64_t>(rng.below(5));
    const std::int64_t kernel = 1 + 2 * static_cast<std::int64_t>(rng.below(3));
    const Shape s{1, h * w, 2, 4};
    const auto q = randn<D>(s, rng), k = randn<D>(s, rng), v = randn<D>(s, rng);
    auto start = [&](std::int64_t pos, std::int64_t extent) {
      const std::int64_t kk = std::min(kernel, extent);
      return std::clamp<std::int64_t>(pos - kernel / 2, 0, extent - kk);
    };
    auto allowed = [&](std::int64_t i, std::int64_t j) {
      const std::int64_t r0 = start(i / w, h), c0 = start(i % w, w);
      const std::int64_t r = j / w, cc = j % w;
      return r >= r0 && r < r0 + std::min(kernel, h) && cc >= c0 && cc < c0 + std::min(kernel, w);
    };
    const auto want = loop_attention(q.to_vector(), k.to_vector(), v.to_vector(), 1, h * w, 2, 4, allowed,
                                     {1.0, 1.0}, false);
    nb = std::max(nb, max_abs_diff(nn::neighborhood_attention(q, k, v, h, w, kernel).data(), want));
  }
  out.add("neighborhood_vs_window_mask_oracle", nb < 1e-10, "10 cases, max abs diff " + num(nb));

  const auto pattern = AttentionPattern::neighborhood(4, 4, 3);
  const std::vector<std::int32_t> corner = {0, 1, 2, 4, 5, 6, 8, 9, 10};
  out.add("neighborhood_corner_key_set", pattern.keys_of(0) == corner, "4x4 map, kernel 3, query (0,0)");
}

void oracle_ops(Collector& out) {
  RngStream rng = RngStream::for_step(22, StreamPurpose::test, 0);
  {
    // Small integers keep every partial sum exact, so any summation order agrees.
    std::vector<double> a(20), b(15);
    for (auto& x : a) x = static_cast<double>(static_cast<std::int64_t>(rng.below(19)) - 9);
    for (auto& x : b) x = static_cast<double>(static_cast<std::int64_t>(rng.below(19)) - 9);
    const TD c = matmul(TD({4, 5}, a), TD({5, 3}, b));
    double diff = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int p = 0; p < 5; ++p) s += a[i * 5 + p] * b[p * 3 + j];
        diff = std::max(diff, std::abs(s - c[i * 3 + j]));
      }
    out.add("matmul_vs_triple_loop", diff == 0.0, "4x5 . 5x3, max abs diff " + num(diff));
  }
  {
    const TD x = randn<D>({3, 7}, rng, 3.0);
    const TD y = softmax(x, 1);
    double rel = 0;
    for (int r = 0; r < 3; ++r) {
      double z = 0;
      for (int j = 0; j < 7; ++j) z += std::exp(x[r * 7 + j]);
      for (int j = 0; j < 7; ++j) {
        const double want = std::exp(x[r * 7 + j]) / z;
        rel = std::max(rel, std::abs(y[r * 7 + j] - want) / want);
      }
    }
    out.add("softmax_vs_formula", rel < 1e-12, "max rel err " + num(rel));
  }
  {
    const TD x = randn<D>({4, 9}, rng);
    const TD s = randn<D>({9}, rng);
    const TD y = nn::rms_norm(x, s);
    double rel = 0;
    for (int r = 0; r < 4; ++r) {
      double ms = 0;
      for (int j = 0; j < 9; ++j) ms += x[r * 9 + j] * x[r * 9 + j] / 9.0;
      for (int j = 0; j < 9; ++j) {
        const double want = x[r * 9 + j] / std::sqrt(ms + nn::kNormEps) * s[j];
        rel = std::max(rel, std::abs(y[r * 9 + j] - want) / std::max(std::abs(want), 1e-12));
      }
    }
    out.add("rms_norm_vs_formula", rel < 1e-5, "max rel err " + num(rel));
  }
  {
    RngStream init = RngStream::for_step(22, StreamPurpose::test, 1);
    nn::FeedForward<D> ffn(nn::FeedForwardKind::geglu, 8, 4, 0.0, init);
    ParamList<D> ps;
    ffn.collect(ps, "ffn");
    scramble(ps, rng);
    const TD x = randn<D>({2, 3, 8}, rng);
    const TD c = randn<D>({2, 4}, rng);
    const TD got = ffn(x, c, {});
    const TD normed = ffn.norm(x, c);
    const TD want = ffn.down(mul(gelu(ffn.up_gate(normed)), ffn.up_value(normed)));
    double scale = 0;
    for (std::int64_t i = 0; i < want.numel(); ++i) scale = std::max(scale, std::abs(want[i]));
    const double rel = max_abs_diff(got, want) / scale;
    out.add("geglu_vs_composed_primitives", rel < 1e-5, "max rel err " + num(rel));
  }
}

// ---------------------------------------------------------------------------

void invariant_blocks(Collector& out, const VerifyOptions& options) {
  RngStream init = RngStream::for_step(31, StreamPurpose::test, 0);
  RngStream rng = RngStream::for_step(31, StreamPurpose::test, 1);
  const std::vector<nn::AttentionSpec> specs = {
      {nn::AttentionKind::global, 0}, {nn::AttentionKind::neighborhood, 3}, {nn::AttentionKind::swin, 2}};
  double worst = 0;
  int count = 0;
  for (const auto& spec : specs) {
    for (const auto kind : {nn::FeedForwardKind::geglu, nn::FeedForwardKind::gelu}) {
      for (int bi = 0; bi < 2; ++bi) {
        const auto geo = nn::TokenGeometry::build(4, 4, spec, 8, bi);
        nn::HDiTBlock<D> block(16, 8, 8, kind, 0.0, init);
        const TD x = randn<D>({2, 16, 16}, rng);
        const TD c = randn<D>({2, 8}, rng);
        worst = std::max(worst, max_abs_diff(block(x, c, geo), x));
        ++count;
      }
    }
  }
  out.add("blocks_identity_at_construction", worst == 0.0,
          std::to_string(count) + " blocks, max abs diff " + num(worst));

  {
    HDiTModel<D> model(toy_config(), 31);
    const TD x = randn<D>({2, 16, 16, 3}, rng);
    const std::vector<double> sigma = {0.5, 2.0};
    const std::vector<std::int64_t> ids = {0, 1};
    ForwardOptions skip;
    skip.skip_blocks = true;
    const double diff = max_abs_diff(model.forward(x, sigma, ids), model.forward(x, sigma, ids, skip));
    out.add("model_equals_block_free_path_at_construction", diff == 0.0, "max abs diff " + num(diff));

    TD recorded, unrecorded;
    {
      const TD xr = randn<D>({2, 16, 16, 3}, rng, 1.0, true);
      recorded = model.forward(xr, sigma, ids);
      NoGradGuard guard;
      unrecorded = model.forward(xr, sigma, ids);
    }
    const double rdiff = max_abs_diff(recorded, unrecorded);
    out.add("forward_independent_of_recording", rdiff == 0.0, "max abs diff " + num(rdiff));

    const ParamList<D> params = model.parameters();
    if (options.inject_tau_negative) {
      for (const auto& p : params) {
        if (p.name.size() > 4 && p.name.compare(p.name.size() - 4, 4, ".tau") == 0) {
          auto t = p.tensor;
          t.data_mut()[0] = -0.5;
          break;
        }
      }
    }
    double min_tau = INFINITY;
    int taus = 0;
    for (const auto& p : params) {
      if (p.name.size() > 4 && p.name.compare(p.name.size() - 4, 4, ".tau") == 0) {
        ++taus;
        for (const double t : p.tensor.data()) min_tau = std::min(min_tau, t);
      }
    }
    out.add("attention_scales_positive", taus > 0 && min_tau >= nn::kTauFloor,
            std::to_string(taus) + " tau tensors, min " + num(min_tau));
  }

  {
    double diff = 0;
    for (const std::int64_t f : {1, 2, 4}) {
      const auto x = randn<float>({2, 8, 8, 3}, rng);
      diff = std::max(diff, max_abs_diff(pixel_shuffle(pixel_unshuffle(x, f), f), x));
    }
    nn::TokenMerge<D> merge(3, 12, init);
    nn::TokenSplit<D> split(12, 3, init);
    for (auto* lin : {&merge.proj, &split.proj}) {
      auto data = lin->weight.data_mut();
      std::fill(data.begin(), data.end(), 0.0);
      for (int i = 0; i < 12; ++i) data[i * 12 + i] = 1.0;
    }
    const TD x = randn<D>({1, 4, 6, 3}, rng);
    diff = std::max(diff, max_abs_diff(split(merge(x)), x));
    out.add("merge_split_round_trip", diff == 0.0, "pixel shuffle and identity projections, max abs diff " + num(diff));
  }
  {
    const TD skip = randn<D>({5}, rng), up = randn<D>({5}, rng);
    const double d1 = max_abs_diff(nn::lerp_merge(skip, up, TD::scalar(1.0)), skip);
    const double d0 = max_abs_diff(nn::lerp_merge(skip, up, TD::scalar(0.0)), up);
    const double mid = nn::lerp_merge(TD({1}, {2.0}), TD({1}, {4.0}), TD::scalar(0.5))[0];
    out.add("lerp_endpoints", d1 == 0.0 && d0 == 0.0 && mid == 3.0,
            "f=1 diff " + num(d1) + ", f=0 diff " + num(d0) + ", f=0.5 of 2,4 -> " + num(mid));
  }
  {
    const std::int64_t heads = 2, dh = 16;
    double worst_shift = 0;
    for (int c = 0; c < 20; ++c) {
      const auto q = randn<D>({1, 2, heads, dh}, rng), k = randn<D>({1, 2, heads, dh}, rng);
      std::vector<std::int64_t> pos(4);
      for (auto& p : pos) p = static_cast<std::int64_t>(rng.below(12));
      const std::int64_t dr = static_cast<std::int64_t>(rng.below(9)) - 4;
      const std::int64_t dc = static_cast<std::int64_t>(rng.below(9)) - 4;
      auto dots = [&](std::int64_t sr, std::int64_t sc) {
        TokenPositions tp;
        tp.row = {pos[0] + sr, pos[2] + sr};
        tp.col = {pos[1] + sc, pos[3] + sc};
        const RopeTable table = RopeTable::build(tp, dh, nn::kRopeBase);
        const TD rq = apply_axial_rope(q, table), rk = apply_axial_rope(k, table);
        std::vector<double> out_dots(heads);
        for (std::int64_t hh = 0; hh < heads; ++hh) {
          double s = 0;
          for (std::int64_t i = 0; i < dh; ++i) s += rq[(0 * heads + hh) * dh + i] * rk[(1 * heads + hh) * dh + i];
          out_dots[hh] = s;
        }
        return out_dots;
      };
      const auto a = dots(0, 0), b = dots(dr, dc);
      for (std::int64_t hh = 0; hh < heads; ++hh) worst_shift = std::max(worst_shift, std::abs(a[hh] - b[hh]));
    }
    out.add("rope_shift_equivariance", worst_shift < 1e-5, "20 cases, max diff " + num(worst_shift));
  }
  {
    const auto q = randn<D>({1, 6, 2, 8}, rng), k = randn<D>({1, 6, 2, 8}, rng);
    const TD tau({2}, {0.1, 0.7});
    const auto weights = nn::cosine_attention_weights(q, k, tau, AttentionPattern::global(6));
    double row_err = 0, spread_excess = -INFINITY;
    for (int hh = 0; hh < 2; ++hh) {
      for (int i = 0; i < 6; ++i) {
        double s = 0, mx = 0, mn = INFINITY;
        for (int j = 0; j < 6; ++j) {
          const double p = weights[(hh * 6 + i) * 6 + j];
          s += p;
          mx = std::max(mx, p);
          mn = std::min(mn, p);
        }
        row_err = std::max(row_err, std::abs(s - 1.0));
        // Logits confined to [-1/tau, 1/tau] bound the log-ratio of weights by 2/tau.
        spread_excess = std::max(spread_excess, std::log(mx / mn) - 2.0 / tau[hh]);
      }
    }
    out.add("cosine_weights_normalized_and_bounded", row_err < 1e-6 && spread_excess <= 1e-9,
            "row sum err " + num(row_err) + ", log-ratio excess " + num(spread_excess));
  }
  {
    const Shape s{1, 9, 2, 4};
    const auto q = randn<D>(s, rng), k = randn<D>(s, rng), v1 = randn<D>(s, rng), v2 = randn<D>(s, rng);
    const auto pat = AttentionPattern::neighborhood(3, 3, 3);
    const double diff = max_abs_diff(pattern_attention(q, k, add(v1, v2), pat),
                                     add(pattern_attention(q, k, v1, pat), pattern_attention(q, k, v2, pat)));
    out.add("attention_linear_in_values", diff < 1e-12, "max abs diff " + num(diff));
  }
}

void invariant_model_math(Collector& out) {
  {
    const ModelConfig cfg = presets::imagenet128();
    const ModelConfig big = adapt_resolution(cfg, 512);
    bool geometric = true;
    for (int l = 0; l + 1 < big.level_count(); ++l) {
      const auto a = big.grid_side(l, 512), b = big.grid_side(l + 1, 512);
      geometric = geometric && a * a == 4 * b * b;
    }
    const auto r128 = cost::count_hdit(cfg, 128);
    const auto r256 = cost::count_hdit(adapt_resolution(cfg, 256), 256);
    const auto& c0 = r128.levels.back();
    const auto& c1 = r256.levels.back();
    const bool core_same = c0.tokens == c1.tokens && c0.attention_projections == c1.attention_projections &&
                           c0.attention_mixing == c1.attention_mixing && c0.feedforward == c1.feedforward;
    out.add("token_counts_geometric", geometric, "512^2 adapted, 4 levels");
    out.add("core_cost_unchanged_by_adaptation", core_same,
            "core level at 128^2 and 256^2: " + std::to_string(c0.tokens) + " tokens");
  }
  {
    double worst = 0;
    const double sd = 0.5;
    for (int i = 0; i < 100; ++i) {
      const double sigma = std::pow(10.0, -3.0 + 6.0 * i / 99.0);
      const auto p = Preconditioner::at(sigma, sd);
      const double tot = sigma * sigma + sd * sd;
      worst = std::max(worst, std::abs(p.c_skip * tot - sd * sd) / (sd * sd));
      worst = std::max(worst, std::abs(p.c_out * p.c_out * tot - sigma * sigma * sd * sd) / (sigma * sigma * sd * sd));
      worst = std::max(worst, std::abs(p.c_in * p.c_in * tot - 1.0));
      worst = std::max(worst, std::abs(p.c_noise - std::log(sigma) / 4.0) / std::max(std::abs(p.c_noise), 1e-300));
    }
    out.add("preconditioner_identities", worst < 1e-10, "100 log-spaced sigma, max rel err " + num(worst));
  }
  {
    DiffusionConfig soft;
    soft.weighting = LossWeighting::soft_min_snr;
    bool ok = true;
    double prev = INFINITY;
    for (int i = 0; i < 100; ++i) {
      const double sigma = std::pow(10.0, -3.0 + 6.0 * i / 99.0);
      const double w = loss_weight(sigma, soft);
      ok = ok && w < prev && w <= 1.0 / (sigma * sigma) && w <= soft.gamma;
      prev = w;
    }
    out.add("soft_min_snr_monotone_and_bounded", ok, "100 log-spaced sigma, gamma 4");
  }
}

}  // namespace

std::vector<CheckResult> grad_suite(const VerifyOptions&) {
  Collector out("grad");
  const auto t0 = std::chrono::steady_clock::now();
  grad_blocks(out);
  grad_model(out);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.add("runtime_under_5_minutes", secs < 300.0, num(secs) + " s");
  return out.take();
}

std::vector<CheckResult> oracle_suite(const VerifyOptions&) {
  Collector out("oracle");
  oracle_attention(out);
  oracle_ops(out);
  return out.take();
}

std::vector<CheckResult> invariant_suite(const VerifyOptions& options) {
  Collector out("invariants");
  invariant_blocks(out, options);
  invariant_model_math(out);
  return out.take();
}

std::vector<CheckResult> run_suite(const std::string& suite, const VerifyOptions& options) {
  if (suite == "grad") return grad_suite(options);
  if (suite == "oracle") return oracle_suite(options);
  if (suite == "invariants") return invariant_suite(options);
  if (suite == "all") {
    auto all = grad_suite(options);
    for (auto& r : oracle_suite(options)) all.push_back(std::move(r));
    for (auto& r : invariant_suite(options)) all.push_back(std::move(r));
    return all;
  }
  throw ConfigError("unknown suite '" + suite + "' (expected grad, oracle, invariants or all)");
}

int cmd_verify(const std::string& suite, const VerifyOptions& options, std::ostream& out) {
  std::vector<CheckResult> results;
  try {
    results = run_suite(suite, options);
  } catch (const ConfigError& e) {
    out << "error: " << e.what() << "\n";
    return 2;
  }
  int failed = 0;
  for (const auto& r : results) {
    out << (r.passed ? "[PASS] " : "[FAIL] ") << r.suite << "/" << r.name;
    if (!r.detail.empty()) out << "  " << r.detail;
    out << "\n";
    failed += r.passed ? 0 : 1;
  }
  out << results.size() - failed << "/" << results.size() << " checks passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace hdit::cli
