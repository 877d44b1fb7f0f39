// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hdit/dataset.hpp"
#include "hdit/model.hpp"
#include "hdit/sampler.hpp"
#include "run_config.hpp"

namespace hdit::cli {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitNumeric = 3 };

inline constexpr const char* kLatestCheckpoint = "latest.ckpt";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kLockFile = "train.lock";

/// Generated shapes (seeded from the run seed) or a folder of images.
Dataset load_dataset(const RunConfig& config);

/// Samples images [ids.size(), H, W, C]. Image i starts from the noise stream
/// (seed, sample, first_index + i), so it does not depend on batching.
Tensor<float> generate(const HDiTModel<float>& model, const SamplerConfig& sampler, double sigma_data,
                       std::span<const std::int64_t> class_ids, std::uint64_t seed, std::int64_t first_index = 0);

/// Training loop. Resumes from <checkpoint_dir>/latest.ckpt when present and
/// appends one metrics row per step.
int run_train(const RunConfig& config, std::ostream& log);
int cmd_train(const std::filesystem::path& config_path, std::ostream& log);

struct SampleOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::int64_t class_id = -1;
  std::int64_t count = 8;
  std::optional<double> cfg_scale;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  /// Use the raw weights instead of the EMA shadow.
  bool raw_weights = false;
};

int cmd_sample(const std::filesystem::path& config_path, const SampleOptions& options, std::ostream& log);

struct CostOptions {
  std::string arch = "hdit";
  std::optional<std::filesystem::path> config;
  std::string preset = "imagenet128";
  std::vector<std::int64_t> resolutions = {128, 256, 512, 1024};
  std::optional<std::filesystem::path> csv;
};

int cmd_cost(const CostOptions& options, std::ostream& out);

}  // namespace hdit::cli
