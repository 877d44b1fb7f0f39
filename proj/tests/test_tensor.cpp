// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "hdit/error.hpp"
#include "hdit/ops.hpp"
#include "hdit/rng.hpp"
#include "test_util.hpp"

namespace hdit {
namespace {

using test::fd_rel_error;
using test::randn;
using test::stream;
using test::weighted;
using TD = Tensor<double>;
using TF = Tensor<float>;

TEST(Matmul, IdentityLeavesOperand) {
  const TD id({2, 2}, {1, 0, 0, 1});
  const TD b({2, 2}, {3, 4, 5, 6});
  EXPECT_EQ(matmul(id, b).to_vector(), b.to_vector());
}

TEST(Matmul, RowTimesColumn) {
  const TD c = matmul(TD({1, 2}, {1, 2}), TD({2, 1}, {3, 4}));
  EXPECT_EQ(c.shape(), (Shape{1, 1}));
  EXPECT_EQ(c.item(), 11.0);
}

TEST(Matmul, MatchesTripleLoopExactly) {
  auto rng = stream(1);
  // Integer entries keep every partial sum exact in any order.
  std::vector<double> a(20), b(15);
  for (auto& x : a) x = static_cast<double>(static_cast<int>(rng.below(21)) - 10);
  for (auto& x : b) x = static_cast<double>(static_cast<int>(rng.below(21)) - 10);
  const TD c = matmul(TD({4, 5}, a), TD({5, 3}, b));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int p = 0; p < 5; ++p) s += a[i * 5 + p] * b[p * 3 + j];
      EXPECT_EQ(c[i * 3 + j], s);
    }
}

TEST(Matmul, RandomFloatAgainstLoop) {
  auto rng = stream(2);
  const TF a = randn<float>({7, 13}, rng), b = randn<float>({13, 5}, rng);
  const TF c = matmul(a, b);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 5; ++j) {
      double s = 0;
      for (int p = 0; p < 13; ++p) s += static_cast<double>(a[i * 13 + p]) * b[p * 5 + j];
      EXPECT_NEAR(c[i * 5 + j], s, 1e-5);
    }
}

TEST(Matmul, RejectsMismatchedInnerExtent) {
  EXPECT_THROW(matmul(TD::zeros({2, 3}), TD::zeros({2, 3})), ShapeError);
  EXPECT_THROW(matmul(TD::zeros({2}), TD::zeros({2, 3})), ShapeError);
}

TEST(Softmax, UniformOnEqualLogits) {
  const TD y = softmax(TD({3}, {0, 0, 0}), 0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y[i], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, NoOverflowOnLargeLogits) {
  const TD y = softmax(TD({2}, {1000, 0}), 0);
  EXPECT_EQ(y[0], 1.0);
  EXPECT_LT(y[1], 1e-30);
}

TEST(Softmax, MatchesDirectFormula) {
  auto rng = stream(3);
  const TD x = randn<double>({4, 6}, rng, 2.0);
  const TD y = softmax(x, 1);
  for (int r = 0; r < 4; ++r) {
    double z = 0;
    for (int j = 0; j < 6; ++j) z += std::exp(x[r * 6 + j]);
    double total = 0;
    for (int j = 0; j < 6; ++j) {
      const double want = std::exp(x[r * 6 + j]) / z;
      EXPECT_LT(std::abs(y[r * 6 + j] - want) / want, 1e-12);
      total += y[r * 6 + j];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Softmax, RowsSumToOneInBinary32) {
  auto rng = stream(4);
  const TF y = softmax(randn<float>({5, 3, 9}, rng, 4.0), 1);
  for (int a = 0; a < 5; ++a)
    for (int c = 0; c < 9; ++c) {
      double s = 0;
      for (int b = 0; b < 3; ++b) s += y[(a * 3 + b) * 9 + c];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Softmax, EmptyAxisThrows) { EXPECT_THROW(softmax(TD::zeros({2, 0}), 1), ShapeError); }

// Elementwise suite: two hand-evaluated cases and one formula comparison each.

TEST(Elementwise, AddSubMulDiv) {
  const TD a({3}, {1, 2, 3}), b({3}, {4, 5, 6});
  EXPECT_EQ(add(a, b).to_vector(), (std::vector<double>{5, 7, 9}));
  EXPECT_EQ(sub(a, b).to_vector(), (std::vector<double>{-3, -3, -3}));
  EXPECT_EQ(mul(a, b).to_vector(), (std::vector<double>{4, 10, 18}));
  EXPECT_EQ(div(TD({2}, {1, 9}), TD({2}, {4, 3})).to_vector(), (std::vector<double>{0.25, 3}));
  // Broadcasting a row against a matrix.
  const TD m({2, 3}, {0, 0, 0, 10, 10, 10});
  EXPECT_EQ(add(m, a).to_vector(), (std::vector<double>{1, 2, 3, 11, 12, 13}));
  EXPECT_THROW(add(TD::zeros({2, 3}), TD::zeros({2})), ShapeError);
}

TEST(Elementwise, ScaleSquareRsqrt) {
  EXPECT_EQ(scale(TD({2}, {1, -2}), 3.0).to_vector(), (std::vector<double>{3, -6}));
  EXPECT_EQ(square(TD({2}, {-3, 0.5})).to_vector(), (std::vector<double>{9, 0.25}));
  EXPECT_EQ(rsqrt(TD({2}, {4, 0.25})).to_vector(), (std::vector<double>{0.5, 2}));
  auto rng = stream(5);
  const TD x = test::uniform<double>({16}, rng, 0.1, 5.0);
  const TD y = rsqrt(x);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(y[i], 1.0 / std::sqrt(x[i]), 1e-15);
}

TEST(Elementwise, GeluExactForm) {
  const TD y = gelu(TD({3}, {0.0, 100.0, -100.0}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 100.0);
  EXPECT_EQ(y[2], 0.0);
  auto rng = stream(6);
  const TD x = randn<double>({32}, rng, 2.0);
  const TD g = gelu(x);
  for (int i = 0; i < 32; ++i) EXPECT_NEAR(g[i], 0.5 * x[i] * (1 + std::erf(x[i] / std::sqrt(2.0))), 1e-15);
}

TEST(Elementwise, Reductions) {
  const TD x({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(sum(x).item(), 21.0);
  EXPECT_EQ(mean(x).item(), 3.5);
  EXPECT_EQ(sum(x, 0).to_vector(), (std::vector<double>{5, 7, 9}));
  EXPECT_EQ(mean(x, 1).to_vector(), (std::vector<double>{2, 5}));
  EXPECT_EQ(variance(TD({4}, {2, 2, 2, 2})).item(), 0.0);
  EXPECT_DOUBLE_EQ(variance(TD({2}, {1, 3})).item(), 1.0);
  auto rng = stream(7);
  const TD r = randn<double>({50}, rng);
  const auto v = r.to_vector();
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / 50;
  double var = 0;
  for (const double e : v) var += (e - m) * (e - m) / 50;
  EXPECT_NEAR(variance(r).item(), var, 1e-14);
}

TEST(Layout, ReshapeRoundTripIsExact) {
  auto rng = stream(8);
  const TF x = randn<float>({2, 3}, rng);
  EXPECT_EQ(reshape(reshape(x, {3, 2}), {2, 3}).to_vector(), x.to_vector());
  EXPECT_THROW(reshape(x, {4, 2}), ShapeError);
}

TEST(Layout, PermuteTransposes) {
  EXPECT_EQ(permute(TD({2, 2}, {1, 2, 3, 4}), {1, 0}).to_vector(), (std::vector<double>{1, 3, 2, 4}));
  auto rng = stream(9);
  const TF x = randn<float>({2, 3, 4}, rng);
  EXPECT_EQ(permute(permute(x, {2, 0, 1}), {1, 2, 0}).to_vector(), x.to_vector());
  EXPECT_THROW(permute(x, {0, 0, 1}), ShapeError);
}

TEST(Layout, ConcatSplitSlice) {
  const TD a({2, 2}, {1, 2, 3, 4}), b({2, 2}, {5, 6, 7, 8});
  const TD c = concat<double>({a, b}, 0);
  EXPECT_EQ(c.shape(), (Shape{4, 2}));
  EXPECT_EQ(c.to_vector(), (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}));
  const auto parts = split(c, {1, 3}, 0);
  EXPECT_EQ(parts[0].to_vector(), (std::vector<double>{1, 2}));
  EXPECT_EQ(parts[1].to_vector(), (std::vector<double>{3, 4, 5, 6, 7, 8}));
  EXPECT_EQ(slice(c, 1, 1, 2).to_vector(), (std::vector<double>{2, 4, 6, 8}));
  EXPECT_THROW(split(c, {1, 1}, 0), ShapeError);
  EXPECT_THROW(slice(c, 0, 2, 5), ShapeError);
}

TEST(Layout, RollIsCyclic) {
  EXPECT_EQ(roll(TD({4}, {1, 2, 3, 4}), 0, 1).to_vector(), (std::vector<double>{4, 1, 2, 3}));
  EXPECT_EQ(roll(TD({4}, {1, 2, 3, 4}), 0, -5).to_vector(), (std::vector<double>{2, 3, 4, 1}));
}

TEST(Layout, PixelShuffleInvertsUnshuffle) {
  auto rng = stream(10);
  const TF x = randn<float>({2, 6, 4, 3}, rng);
  const TF u = pixel_unshuffle(x, 2);
  EXPECT_EQ(u.shape(), (Shape{2, 3, 2, 12}));
  EXPECT_EQ(pixel_shuffle(u, 2).to_vector(), x.to_vector());
  // Channel order (dy * 2 + dx) * C + c: token (0,0) channel 3 is pixel (0,1) channel 0.
  EXPECT_EQ(u[3], x[3]);
  EXPECT_EQ(u[6], x[4 * 3]);
  EXPECT_THROW(pixel_unshuffle(x, 4), ShapeError);
}

TEST(Backward, SumOfSquares) {
  TD x({2}, {1, 2}, true);
  sum(square(x)).backward();
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{2, 4}));
}

TEST(Backward, MatmulAgainstFiniteDifferences) {
  auto rng = stream(11);
  TD x = randn<double>({3, 4}, rng, 1.0, true);
  TD w = randn<double>({4, 2}, rng, 1.0, true);
  EXPECT_LT(fd_rel_error([&] { return sum(matmul(x, w)); }, {x, w}), 1e-6);
  // d/dx sum(xW) puts the row sums of W in every row.
  x.zero_grad();
  sum(matmul(x, w)).backward();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(x.grad()[i * 4 + k], w[k * 2] + w[k * 2 + 1], 1e-15);
}

TEST(Backward, PlainSumGivesOnes) {
  TD x({3}, {5, -1, 2}, true);
  sum(x).backward();
  for (const double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, LeafGradientsAccumulate) {
  TD x({1}, {3}, true);
  sum(square(x)).backward();
  sum(square(x)).backward();
  EXPECT_EQ(x.grad()[0], 12.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad() && x.grad()[0] != 0.0);
}

TEST(Backward, NonScalarLossThrows) {
  TD x({2}, {1, 2}, true);
  EXPECT_THROW(square(x).backward(), ShapeError);
}

TEST(Backward, SharedSubexpressionVisitedOnce) {
  TD x({1}, {2}, true);
  const TD y = square(x);
  sum(add(y, y)).backward();  // d/dx 2x^2 = 4x
  EXPECT_EQ(x.grad()[0], 8.0);
}

// Every differentiable op against central differences in binary64.
TEST(Backward, EveryOpMatchesFiniteDifferences) {
  auto rng = stream(12);
  TD a = randn<double>({3, 4}, rng, 1.0, true);
  TD b = randn<double>({3, 4}, rng, 1.0, true);
  TD row = randn<double>({4}, rng, 1.0, true);
  TD pos = test::uniform<double>({3, 4}, rng, 0.5, 2.0, true);
  TD w = randn<double>({5, 4}, rng, 1.0, true);
  TD img = randn<double>({1, 4, 4, 2}, rng, 1.0, true);
  TD table = randn<double>({3, 4}, rng, 1.0, true);
  const double tol = 1e-6;
  EXPECT_LT(fd_rel_error([&] { return weighted(add(a, row)); }, {a, row}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(sub(a, b)); }, {a, b}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(mul(a, row)); }, {a, row}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(div(a, pos)); }, {a, pos}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(scale(add_scalar(a, 0.5), -1.5)); }, {a}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(square(a)); }, {a}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(sqrt(pos)); }, {pos}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(rsqrt(pos)); }, {pos}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(exp(a)); }, {a}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(log(pos)); }, {pos}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(gelu(a)); }, {a}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(geglu(a, b)); }, {a, b}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(rms_norm(a, row, 1e-6)); }, {a, row}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(l2_normalize(a, 1e-6)); }, {a}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(sum(a, 1)); }, {a}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(mean(a, 0, true)); }, {a}), tol);
  EXPECT_LT(fd_rel_error([&] { return variance(a); }, {a}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(variance(a, 1)); }, {a}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(linear(a, w)); }, {a, w}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(softmax(a, 1)); }, {a}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(permute(reshape(a, {2, 6}), {1, 0})); }, {a}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(concat<double>({a, b}, 1)); }, {a, b}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(split(a, {1, 3}, 1)[1]); }, {a}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(slice(a, 0, 1, 3)); }, {a}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(roll(a, 1, 3)); }, {a}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(gather_rows(table, {2, 0, 2})); }, {table}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(pixel_unshuffle(img, 2)); }, {img}), tol);
  EXPECT_LT(fd_rel_error([&] { return weighted(pixel_shuffle(img, 1)); }, {img}), tol);
}

TEST(Graph, ForwardIdenticalWithRecordingOff) {
  auto rng = stream(13);
  const TD x = randn<double>({4, 6}, rng, 1.0, true);
  const TD w = randn<double>({3, 6}, rng, 1.0, true);
  const TD on = softmax(gelu(linear(x, w)), 1);
  NoGradGuard guard;
  const TD off = softmax(gelu(linear(x, w)), 1);
  EXPECT_EQ(on.to_vector(), off.to_vector());
  EXPECT_TRUE(off.is_leaf());
}

TEST(Graph, NonFiniteResultIsReported) {
  const bool before = finite_checks_enabled();
  set_finite_checks(true);
  EXPECT_THROW(log(TD({1}, {-1.0})), NumericError);
  EXPECT_THROW(div(TD({1}, {1.0}), TD({1}, {0.0})), NumericError);
  set_finite_checks(before);
}

TEST(Graph, DataLengthMustMatchShape) { EXPECT_THROW(TD({2, 2}, {1, 2, 3}), ShapeError); }

TEST(Rng, PhiloxKnownAnswers) {
  // Reference vectors from the Random123 distribution (kat_vectors).
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}),
            (std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Rng, SameStreamSameValues) {
  RngStream a(7, 3), b(7, 3);
  EXPECT_EQ(rng_fill<float>({64}, Distribution::standard_normal, a).to_vector(),
            rng_fill<float>({64}, Distribution::standard_normal, b).to_vector());
}

TEST(Rng, DistinctStreamsDiffer) {
  RngStream a(7, 3), b(7, 4);
  EXPECT_NE(rng_fill<double>({16}, Distribution::uniform01, a).to_vector(),
            rng_fill<double>({16}, Distribution::uniform01, b).to_vector());
}

TEST(Rng, NormalMoments) {
  RngStream rng(42, 9);
  const TD x = rng_fill<double>({1000000}, Distribution::standard_normal, rng);
  const auto v = x.to_vector();
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double var = 0;
  for (const double e : v) var += (e - m) * (e - m);
  var /= static_cast<double>(v.size());
  EXPECT_LT(std::abs(m), 0.01);
  EXPECT_LT(std::abs(var - 1.0), 0.02);
}

TEST(Rng, UniformStaysInOpenInterval) {
  RngStream rng(1, 1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

}  // namespace
}  // namespace hdit
