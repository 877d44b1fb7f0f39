// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hdit/rng.hpp"
#include "hdit/tensor.hpp"

namespace hdit {

struct Dataset {
  Tensor<float> images;  // [n, h, w, c], values in [-1, 1]
  std::vector<std::int64_t> labels;  // empty when unlabeled
  std::int64_t class_count = 0;

  std::int64_t size() const { return images.defined() ? images.extent(0) : 0; }
  /// Throws ConfigError on out-of-range pixels or labels.
  void validate() const;
  /// Copies the listed examples into a batch.
  Tensor<float> gather(std::span<const std::int64_t> indices) const;
  std::vector<std::int64_t> gather_labels(std::span<const std::int64_t> indices) const;
};

/// Two classes on a -1 background: filled discs (0) and axis-aligned squares
/// (1), anti-aliased by 4x4 supersampling, with jittered centre, size and
/// colour. Labels alternate 0, 1, 0, ...
Dataset gen_shapes(std::int64_t n, std::int64_t res, RngStream& rng);

/// Spread of the shape outline around its centre of mass: the coefficient of
/// variation (squared) of per-sector radii sqrt(2 E[r^2]) over 16 angular
/// sectors, with pixel mass (mean channel + 1) / 2. Near zero for discs.
double radial_variance(const Tensor<float>& image);

/// Threshold on radial_variance separating discs (below) from squares.
struct ShapeClassifier {
  double threshold = 0;

  /// Picks the threshold maximizing accuracy on labelled statistics.
  static ShapeClassifier fit(std::span<const double> stats, std::span<const std::int64_t> labels);
  std::int64_t classify(double stat) const { return stat < threshold ? 0 : 1; }
};

/// Loads every .ppm under `root` in lexicographic order, centre-cropped to a
/// square and resized to res x res by nearest neighbour. When `root` holds
/// subdirectories, each one (sorted) is a class.
Dataset load_folder(const std::filesystem::path& root, std::int64_t res);

/// Square centre crop followed by nearest-neighbour resize of [H, W, C].
Tensor<float> crop_resize(const Tensor<float>& image, std::int64_t res);

/// Batch indices for `step`, drawn with replacement from the data stream.
std::vector<std::int64_t> batch_indices(std::int64_t dataset_size, std::int64_t batch, std::uint64_t seed,
                                        std::uint64_t step);

}  // namespace hdit
