// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/ppm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "hdit/error.hpp"

namespace hdit {

namespace {

class HeaderParser {
 public:
  explicit HeaderParser(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  std::int64_t number(const char* what) {
    skip_space_and_comments();
    std::int64_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) throw IoError(std::string("PPM ") + what + " is too large");
    }
    if (digits == 0) throw IoError(std::string("malformed PPM header: missing ") + what);
    return value;
  }

  std::size_t pos_ = 0;
  std::span<const std::uint8_t> bytes_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Image8 decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw IoError("malformed PPM header: expected P6");
  HeaderParser p(bytes);
  p.pos_ = 2;
  Image8 img;
  img.width = p.number("width");
  img.height = p.number("height");
  const auto maxval = p.number("maxval");
  if (img.width < 1 || img.height < 1) throw IoError("PPM has an empty raster");
  if (maxval != 255) throw IoError("unsupported PPM maxval " + std::to_string(maxval) + " (only 255)");
  if (p.pos_ >= bytes.size() || !std::isspace(bytes[p.pos_])) throw IoError("malformed PPM header");
  ++p.pos_;
  const auto need = static_cast<std::size_t>(img.width * img.height * 3);
  if (bytes.size() - p.pos_ < need) throw IoError("PPM raster truncated");
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(p.pos_),
                 bytes.begin() + static_cast<std::ptrdiff_t>(p.pos_ + need));
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image8& image) {
  if (static_cast<std::int64_t>(image.rgb.size()) != image.width * image.height * 3) {
    throw ShapeError("image buffer does not match its extent");
  }
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.rgb.begin(), image.rgb.end());
  return out;
}

Image8 read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_ppm(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_ppm(const std::filesystem::path& path, const Image8& image) {
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

float byte_to_value(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }

std::uint8_t value_to_byte(float v) {
  const float c = std::clamp(v, -1.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround((c + 1.0f) * 127.5f));
}

Image8 to_image(const Tensor<float>& t) {
  Shape s = t.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3 || (s[2] != 1 && s[2] != 3)) {
    throw ShapeError("image tensor must be [H, W, 1|3], got " + shape_str(t.shape()));
  }
  Image8 img{s[1], s[0], {}};
  img.rgb.resize(static_cast<std::size_t>(s[0] * s[1] * 3));
  const auto data = t.data();
  for (std::int64_t i = 0; i < s[0] * s[1]; ++i) {
    for (int c = 0; c < 3; ++c) img.rgb[i * 3 + c] = value_to_byte(data[i * s[2] + (s[2] == 3 ? c : 0)]);
  }
  return img;
}

Tensor<float> from_image(const Image8& image) {
  std::vector<float> values(image.rgb.size());
  std::transform(image.rgb.begin(), image.rgb.end(), values.begin(), byte_to_value);
  return Tensor<float>({image.height, image.width, 3}, std::move(values));
}

void save_image(const Tensor<float>& t, const std::filesystem::path& path) { write_ppm(path, to_image(t)); }

Tensor<float> load_image(const std::filesystem::path& path) { return from_image(read_ppm(path)); }

Image8 make_grid(const Tensor<float>& images, std::int64_t columns) {
  if (images.rank() != 4) throw ShapeError("grid input must be [N, H, W, C]");
  if (columns < 1) throw ConfigError("grid needs at least one column");
  const auto n = images.extent(0), h = images.extent(1), w = images.extent(2), c = images.extent(3);
  if (c != 1 && c != 3) throw ShapeError("grid images need 1 or 3 channels");
  const auto cols = std::min(columns, std::max<std::int64_t>(n, 1));
  const auto rows = (n + cols - 1) / cols;
  Image8 grid{cols * w, std::max<std::int64_t>(rows, 1) * h, {}};
  grid.rgb.assign(static_cast<std::size_t>(grid.width * grid.height * 3), 0);
  const auto data = images.data();
  for (std::int64_t k = 0; k < n; ++k) {
    const auto oy = (k / cols) * h, ox = (k % cols) * w;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const auto src = ((k * h + y) * w + x) * c;
        const auto dst = ((oy + y) * grid.width + ox + x) * 3;
        for (int ch = 0; ch < 3; ++ch) grid.rgb[dst + ch] = value_to_byte(data[src + (c == 3 ? ch : 0)]);
      }
    }
  }
  return grid;
}

}  // namespace hdit
