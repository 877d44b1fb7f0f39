// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hdit/error.hpp"
#include "hdit/ppm.hpp"

namespace hdit {

namespace {

constexpr int kSupersample = 4;
constexpr int kSectors = 16;

}  // namespace

void Dataset::validate() const {
  for (const float v : images.data()) {
    if (!(v >= -1.0f && v <= 1.0f)) throw ConfigError("dataset pixel outside [-1, 1]");
  }
  if (!labels.empty() && static_cast<std::int64_t>(labels.size()) != size()) {
    throw ConfigError("label count does not match the image count");
  }
  for (const auto l : labels) {
    if (l < 0 || l >= class_count) throw ConfigError("label " + std::to_string(l) + " out of range");
  }
}

Tensor<float> Dataset::gather(std::span<const std::int64_t> indices) const {
  Shape shape = images.shape();
  const std::int64_t per = images.numel() / shape[0];
  shape[0] = static_cast<std::int64_t>(indices.size());
  std::vector<float> out(static_cast<std::size_t>(shape_numel(shape)));
  const auto src = images.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= size()) throw ShapeError("dataset index out of range");
    std::copy_n(src.begin() + indices[i] * per, per, out.begin() + static_cast<std::int64_t>(i) * per);
  }
  return Tensor<float>(shape, std::move(out));
}

std::vector<std::int64_t> Dataset::gather_labels(std::span<const std::int64_t> indices) const {
  std::vector<std::int64_t> out;
  if (labels.empty()) return out;
  for (const auto i : indices) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

Dataset gen_shapes(std::int64_t n, std::int64_t res, RngStream& rng) {
  if (res < 16) throw ConfigError("gen_shapes needs res >= 16");
  if (n < 0) throw ConfigError("gen_shapes needs n >= 0");
  constexpr std::int64_t c = 3;
  std::vector<float> data(static_cast<std::size_t>(n * res * res * c), -1.0f);
  Dataset ds;
  ds.class_count = 2;
  const double r = static_cast<double>(res);
  for (std::int64_t k = 0; k < n; ++k) {
    const std::int64_t label = k % 2;
    ds.labels.push_back(label);
    // Half-extent: disc radius or square half-side, chosen for similar areas.
    const double size = r * (0.18 + 0.14 * rng.uniform()) * (label == 0 ? 1.0 : 0.886);
    const double margin = size + 1.0;
    const double cx = margin + (r - 2 * margin) * rng.uniform();
    const double cy = margin + (r - 2 * margin) * rng.uniform();
    const double level = 0.1 + 0.9 * rng.uniform();
    float colour[c];
    for (auto& ch : colour) ch = static_cast<float>(std::clamp(level + 0.2 * (rng.uniform() - 0.5), -1.0, 1.0));
    for (std::int64_t y = 0; y < res; ++y) {
      for (std::int64_t x = 0; x < res; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSupersample; ++sy) {
          for (int sx = 0; sx < kSupersample; ++sx) {
            const double px = static_cast<double>(x) + (sx + 0.5) / kSupersample - cx;
            const double py = static_cast<double>(y) + (sy + 0.5) / kSupersample - cy;
            const bool inside = label == 0 ? px * px + py * py <= size * size
                                           : std::abs(px) <= size && std::abs(py) <= size;
            hits += inside ? 1 : 0;
          }
        }
        const float cover = static_cast<float>(hits) / (kSupersample * kSupersample);
        float* pix = data.data() + ((k * res + y) * res + x) * c;
        for (int ch = 0; ch < c; ++ch) pix[ch] = -1.0f + cover * (colour[ch] + 1.0f);
      }
    }
  }
  ds.images = Tensor<float>({n, res, res, c}, std::move(data));
  return ds;
}

double radial_variance(const Tensor<float>& image) {
  Shape s = image.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3) throw ShapeError("radial_variance expects [H, W, C]");
  const std::int64_t h = s[0], w = s[1], c = s[2];
  const auto data = image.data();
  std::vector<double> mass(static_cast<std::size_t>(h * w));
  double total = 0, mx = 0, my = 0;
  for (std::int64_t i = 0; i < h * w; ++i) {
    double m = 0;
    for (std::int64_t ch = 0; ch < c; ++ch) m += data[i * c + ch];
    m = std::clamp((m / static_cast<double>(c) + 1.0) / 2.0, 0.0, 1.0);
    mass[i] = m;
    total += m;
    mx += m * static_cast<double>(i % w);
    my += m * static_cast<double>(i / w);
  }
  if (total <= 0) return 0.0;
  mx /= total;
  my /= total;
  double sector_mass[kSectors] = {}, sector_r2[kSectors] = {};
  for (std::int64_t i = 0; i < h * w; ++i) {
    const double dx = static_cast<double>(i % w) - mx, dy = static_cast<double>(i / w) - my;
    const double angle = std::atan2(dy, dx) + std::numbers::pi;
    const int sector = std::min(kSectors - 1, static_cast<int>(angle / (2 * std::numbers::pi) * kSectors));
    sector_mass[sector] += mass[i];
    sector_r2[sector] += mass[i] * (dx * dx + dy * dy);
  }
  double sum = 0, sum_sq = 0;
  int used = 0;
  for (int k = 0; k < kSectors; ++k) {
    if (sector_mass[k] <= 0) continue;
    const double radius = std::sqrt(2.0 * sector_r2[k] / sector_mass[k]);
    sum += radius;
    sum_sq += radius * radius;
    ++used;
  }
  if (used == 0) return 0.0;
  const double mean = sum / used;
  if (mean <= 0) return 0.0;
  return (sum_sq / used - mean * mean) / (mean * mean);
}

ShapeClassifier ShapeClassifier::fit(std::span<const double> stats, std::span<const std::int64_t> labels) {
  if (stats.size() != labels.size() || stats.empty()) throw ConfigError("classifier needs matching, non-empty data");
  std::vector<std::size_t> order(stats.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return stats[a] < stats[b]; });
  // Threshold between sorted positions j-1 and j: everything before is a disc.
  std::int64_t squares_total = 0;
  for (const auto l : labels) squares_total += l == 1 ? 1 : 0;
  std::int64_t correct = squares_total, best = correct;
  double best_threshold = stats[order.front()] - 1.0;
  for (std::size_t j = 0; j < order.size(); ++j) {
    correct += labels[order[j]] == 0 ? 1 : -1;
    const double next = j + 1 < order.size() ? stats[order[j + 1]] : stats[order[j]] + 1.0;
    if (correct > best && next > stats[order[j]]) {
      best = correct;
      best_threshold = 0.5 * (stats[order[j]] + next);
    }
  }
  return {best_threshold};
}

Tensor<float> crop_resize(const Tensor<float>& image, std::int64_t res) {
  if (image.rank() != 3) throw ShapeError("crop_resize expects [H, W, C]");
  if (res < 1) throw ConfigError("resize target must be positive");
  const std::int64_t h = image.extent(0), w = image.extent(1), c = image.extent(2);
  const std::int64_t side = std::min(h, w), oy = (h - side) / 2, ox = (w - side) / 2;
  std::vector<float> out(static_cast<std::size_t>(res * res * c));
  const auto src = image.data();
  for (std::int64_t y = 0; y < res; ++y) {
    const std::int64_t sy = oy + (2 * y + 1) * side / (2 * res);
    for (std::int64_t x = 0; x < res; ++x) {
      const std::int64_t sx = ox + (2 * x + 1) * side / (2 * res);
      for (std::int64_t ch = 0; ch < c; ++ch) out[(y * res + x) * c + ch] = src[(sy * w + sx) * c + ch];
    }
  }
  return Tensor<float>({res, res, c}, std::move(out));
}

Dataset load_folder(const std::filesystem::path& root, std::int64_t res) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("dataset folder " + root.string() + " does not exist");
  auto list_ppm = [](const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
  };
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_dirs.push_back(e.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());

  Dataset ds;
  std::vector<std::pair<fs::path, std::int64_t>> files;
  if (class_dirs.empty()) {
    for (auto& f : list_ppm(root)) files.emplace_back(f, -1);
  } else {
    ds.class_count = static_cast<std::int64_t>(class_dirs.size());
    for (std::size_t k = 0; k < class_dirs.size(); ++k) {
      for (auto& f : list_ppm(class_dirs[k])) files.emplace_back(f, static_cast<std::int64_t>(k));
    }
  }
  if (files.empty()) throw IoError("no .ppm files under " + root.string());
  const auto per = static_cast<std::size_t>(res * res * 3);
  std::vector<float> data(files.size() * per);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto img = crop_resize(load_image(files[i].first), res);
    std::copy(img.data().begin(), img.data().end(), data.begin() + static_cast<std::ptrdiff_t>(i * per));
    if (files[i].second >= 0) ds.labels.push_back(files[i].second);
  }
  ds.images = Tensor<float>({static_cast<std::int64_t>(files.size()), res, res, 3}, std::move(data));
  return ds;
}

std::vector<std::int64_t> batch_indices(std::int64_t dataset_size, std::int64_t batch, std::uint64_t seed,
                                        std::uint64_t step) {
  if (dataset_size < 1) throw ConfigError("dataset is empty");
  RngStream rng = RngStream::for_step(seed, StreamPurpose::data, step);
  std::vector<std::int64_t> out(static_cast<std::size_t>(batch));
  for (auto& i : out) i = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(dataset_size)));
  return out;
}

}  // namespace hdit
