// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hdit/diffusion.hpp"
#include "hdit/model_config.hpp"
#include "hdit/optim.hpp"
#include "hdit/sampler.hpp"

namespace hdit::cli {

struct DataConfig {
  /// "shapes" for the generated toy set, otherwise a folder of .ppm files.
  std::string source = "shapes";
  /// Number of generated images (shapes only).
  std::int64_t size = 4096;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  std::int64_t steps = 1000;
  std::int64_t batch_size = 32;
  std::string checkpoint_dir = "run";
  std::string output_dir = "samples";
  std::int64_t log_interval = 50;
  /// 0 disables periodic checkpoints (the final one is always written).
  std::int64_t checkpoint_every = 500;
  /// Also keep step-numbered copies of each periodic checkpoint.
  bool keep_checkpoints = false;
  /// 0 disables periodic sample grids.
  std::int64_t sample_every = 0;
  /// Grid layout is 8 columns by this many rows.
  std::int64_t grid_rows = 2;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct RunConfig {
  ModelConfig model;
  DiffusionConfig diffusion;
  AdamWConfig optimizer;
  SamplerConfig sampler;
  DataConfig data;
  TrainConfig train;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
  void validate() const;
};

/// INI-style text: `[section]` headers (model, diffusion, optimizer, sampler,
/// data, train), `key = value` lines, `#` comments, lists as `[a, b]`.
/// Unset keys keep their defaults; `[model] preset = name` starts the model
/// from a named preset before the other model keys apply. Throws ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Emits every key explicitly; parse_run_config(serialize(c)) == c.
std::string serialize(const RunConfig& config);

}  // namespace hdit::cli
