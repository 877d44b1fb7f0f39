// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hdit/tensor.hpp"

namespace hdit {

/// 8-bit RGB raster, row-major, interleaved.
struct Image8 {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> rgb;

  friend bool operator==(const Image8&, const Image8&) = default;
};

/// Binary P6 with maxval 255. Header comments are accepted on input.
Image8 decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Image8& image);
Image8 read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image8& image);

/// b / 127.5 - 1.
float byte_to_value(std::uint8_t b);
/// Inverse of byte_to_value after clamping to [-1, 1] and rounding.
std::uint8_t value_to_byte(float v);

/// [H, W, C] or [1, H, W, C] with C in {1, 3}; one channel is replicated.
Image8 to_image(const Tensor<float>& t);
/// [H, W, 3] in [-1, 1].
Tensor<float> from_image(const Image8& image);

void save_image(const Tensor<float>& t, const std::filesystem::path& path);
Tensor<float> load_image(const std::filesystem::path& path);

/// Tiles [N, H, W, C] images into rows of `columns`; empty cells stay black.
Image8 make_grid(const Tensor<float>& images, std::int64_t columns = 8);

}  // namespace hdit
