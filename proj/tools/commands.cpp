// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "hdit/checkpoint.hpp"
#include "hdit/cost_model.hpp"
#include "hdit/error.hpp"
#include "hdit/ppm.hpp"
#include "hdit/train.hpp"

namespace fs = std::filesystem;

namespace hdit::cli {
namespace {

// Stream reserved for dataset generation; batch draws use the data stream at
// the (much smaller) step index.
constexpr std::uint64_t kDatasetStep = (1ull << 40) - 1;
constexpr std::int64_t kSampleChunk = 16;

// Exclusive marker for a checkpoint directory, removed on scope exit.
class LockFile {
 public:
  explicit LockFile(fs::path path) : path_(std::move(path)) {
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
    if (fd < 0) {
      if (errno == EEXIST) {
        throw ConfigError(path_.string() + " exists; another trainer owns this directory");
      }
      throw IoError("cannot create " + path_.string() + ": " + std::strerror(errno));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~LockFile() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  fs::path path_;
};

std::string step_name(const char* stem, std::int64_t step, const char* ext) {
  std::ostringstream s;
  s << stem << std::setw(6) << std::setfill('0') << step << ext;
  return s.str();
}

// Keeps the header and every row up to `last_step`; returns the open stream.
std::ofstream open_metrics(const fs::path& path, std::int64_t last_step) {
  std::vector<std::string> kept;
  if (last_step > 0 && fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) <= last_step) kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,loss,mean_sigma,weight_norm,ema_distance\n";
  for (const auto& line : kept) out << line << "\n";
  return out;
}

std::vector<std::int64_t> grid_classes(std::int64_t count, std::int64_t num_classes) {
  std::vector<std::int64_t> ids(static_cast<std::size_t>(count), -1);
  if (num_classes > 0) {
    for (std::int64_t i = 0; i < count; ++i) ids[i] = i % num_classes;
  }
  return ids;
}

void save_checkpoint(const Trainer& trainer, const fs::path& dir, bool keep_copy) {
  Checkpoint ckpt;
  trainer.save(ckpt);
  ckpt.save(dir / kLatestCheckpoint);
  if (keep_copy) ckpt.save(dir / step_name("step_", trainer.steps_done(), ".ckpt"));
}

}  // namespace

Dataset load_dataset(const RunConfig& config) {
  const auto res = config.model.resolution;
  if (config.data.source == "shapes") {
    RngStream rng = RngStream::for_step(config.train.seed, StreamPurpose::data, kDatasetStep);
    return gen_shapes(config.data.size, res, rng);
  }
  Dataset ds = load_folder(config.data.source, res);
  if (ds.images.extent(3) != config.model.in_channels) {
    throw ConfigError("dataset has " + std::to_string(ds.images.extent(3)) + " channels, model expects " +
                      std::to_string(config.model.in_channels));
  }
  return ds;
}

Tensor<float> generate(const HDiTModel<float>& model, const SamplerConfig& sampler, double sigma_data,
                       std::span<const std::int64_t> class_ids, std::uint64_t seed, std::int64_t first_index) {
  const auto& mc = model.config();
  const std::int64_t count = static_cast<std::int64_t>(class_ids.size());
  const std::int64_t res = mc.resolution;
  const std::int64_t per_image = res * res * mc.in_channels;
  const Denoiser<float> denoise = make_denoiser<float>(model_net(model), sigma_data);

  std::vector<float> out(static_cast<std::size_t>(count * per_image));
  for (std::int64_t start = 0; start < count; start += kSampleChunk) {
    const std::int64_t n = std::min(kSampleChunk, count - start);
    std::vector<float> noise;
    noise.reserve(static_cast<std::size_t>(n * per_image));
    for (std::int64_t i = 0; i < n; ++i) {
      RngStream rng = RngStream::for_step(seed, StreamPurpose::sample, static_cast<std::uint64_t>(first_index + start + i));
      const auto draw = rng_fill<float>({1, res, res, mc.in_channels}, Distribution::standard_normal, rng);
      noise.insert(noise.end(), draw.data().begin(), draw.data().end());
    }
    const Tensor<float> x0(Shape{n, res, res, mc.in_channels}, std::move(noise));
    const Tensor<float> img = sample_from(denoise, sampler, x0, class_ids.subspan(start, n));
    std::copy(img.data().begin(), img.data().end(), out.begin() + start * per_image);
  }
  return Tensor<float>({count, res, res, mc.in_channels}, std::move(out));
}

int run_train(const RunConfig& cfg, std::ostream& log) {
  try {
    cfg.validate();
    const fs::path dir = cfg.train.checkpoint_dir;
    fs::create_directories(dir);
    const LockFile lock(dir / kLockFile);

    const Dataset data = load_dataset(cfg);
    data.validate();
    if (data.images.extent(1) != cfg.model.resolution || data.images.extent(3) != cfg.model.in_channels) {
      throw ConfigError("dataset images do not match the model resolution or channels");
    }
    const bool conditional = cfg.model.num_classes > 0 && !data.labels.empty();
    if (conditional && data.class_count > cfg.model.num_classes) {
      throw ConfigError("dataset has " + std::to_string(data.class_count) + " classes, model has " +
                        std::to_string(cfg.model.num_classes));
    }

    HDiTModel<float> model(cfg.model, cfg.train.seed);
    Trainer trainer(model, cfg.diffusion, cfg.optimizer, cfg.train.seed);
    const fs::path latest = dir / kLatestCheckpoint;
    if (fs::exists(latest)) {
      trainer.load(Checkpoint::load(latest));
      log << "resuming from step " << trainer.steps_done() << "\n";
    }
    {
      std::ofstream copy(dir / "config.ini");
      copy << serialize(cfg);
    }
    std::ofstream metrics = open_metrics(dir / kMetricsFile, trainer.steps_done());
    metrics << std::setprecision(9);

    const std::uint64_t seed = cfg.train.seed;
    const auto& t = cfg.train;
    double window = 0;
    std::int64_t window_count = 0;
    bool saved = fs::exists(latest);
    while (trainer.steps_done() < t.steps) {
      const auto s = static_cast<std::uint64_t>(trainer.steps_done());
      const auto idx = batch_indices(data.size(), t.batch_size, seed, s);
      const Tensor<float> images = data.gather(idx);
      const std::vector<std::int64_t> labels = conditional ? data.gather_labels(idx) : std::vector<std::int64_t>{};
      const StepStats st = trainer.step(images, labels);
      metrics << st.step << ',' << st.loss << ',' << st.mean_sigma << ',' << trainer.weight_norm() << ','
              << trainer.ema_distance() << '\n';
      saved = false;
      window += st.loss;
      ++window_count;
      if (t.log_interval > 0 && st.step % t.log_interval == 0) {
        log << "step " << st.step << "  loss " << window / static_cast<double>(window_count) << "\n";
        window = 0;
        window_count = 0;
      }
      if (t.checkpoint_every > 0 && st.step % t.checkpoint_every == 0) {
        metrics.flush();
        save_checkpoint(trainer, dir, t.keep_checkpoints);
        saved = true;
      }
      if (t.sample_every > 0 && st.step % t.sample_every == 0) {
        HDiTModel<float> ema_model(cfg.model, seed);
        trainer.ema().copy_to(ema_model.parameters());
        const auto ids = grid_classes(8 * t.grid_rows, cfg.model.num_classes);
        const auto grid = generate(ema_model, cfg.sampler, cfg.diffusion.sigma_data, ids, seed);
        fs::create_directories(t.output_dir);
        write_ppm(fs::path(t.output_dir) / step_name("grid_", st.step, ".ppm"), make_grid(grid, 8));
      }
    }
    metrics.flush();
    if (!saved) save_checkpoint(trainer, dir, false);
    log << "done at step " << trainer.steps_done() << "\n";
    return kExitOk;
  } catch (const NumericError& e) {
    log << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    log << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

int cmd_train(const fs::path& config_path, std::ostream& log) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return run_train(cfg, log);
}

int cmd_sample(const fs::path& config_path, const SampleOptions& options, std::ostream& log) {
  try {
    const RunConfig cfg = load_run_config(config_path);
    cfg.validate();
    SamplerConfig sampler = cfg.sampler;
    if (options.cfg_scale) sampler.cfg_scale = *options.cfg_scale;
    sampler.validate();
    if (options.count < 0) throw ConfigError("--count must be non-negative");
    if (options.class_id != -1 && (options.class_id < 0 || options.class_id >= cfg.model.num_classes)) {
      throw ConfigError("--class out of range");
    }
    const fs::path ckpt_path = options.checkpoint.value_or(fs::path(cfg.train.checkpoint_dir) / kLatestCheckpoint);
    const Checkpoint ckpt = Checkpoint::load(ckpt_path);
    HDiTModel<float> model(cfg.model, cfg.train.seed);
    load_params(ckpt, options.raw_weights ? "model." : "ema.", model.parameters());

    const std::uint64_t seed = options.seed.value_or(cfg.train.seed);
    const fs::path out_dir = options.out_dir.value_or(fs::path(cfg.train.output_dir));
    if (options.count == 0) return kExitOk;
    fs::create_directories(out_dir);
    const std::vector<std::int64_t> ids(static_cast<std::size_t>(options.count), options.class_id);
    const Tensor<float> images = generate(model, sampler, cfg.diffusion.sigma_data, ids, seed);
    const auto res = cfg.model.resolution;
    const auto per = res * res * cfg.model.in_channels;
    for (std::int64_t i = 0; i < options.count; ++i) {
      std::vector<float> one(images.data().begin() + i * per, images.data().begin() + (i + 1) * per);
      const fs::path file = out_dir / ("sample_" + std::to_string(seed) + "_" + std::to_string(i) + ".ppm");
      save_image(Tensor<float>({res, res, cfg.model.in_channels}, std::move(one)), file);
      log << file.string() << "\n";
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    log << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

int cmd_cost(const CostOptions& options, std::ostream& out) {
  try {
    if (options.resolutions.empty()) throw ConfigError("no resolutions given");
    for (const auto r : options.resolutions) {
      if (r <= 0) throw ConfigError("resolutions must be positive");
    }
    std::vector<cost::SweepRow> rows;
    std::vector<std::int64_t> params;
    if (options.arch == "dit") {
      for (const auto r : options.resolutions) {
        if (r % 4 != 0) throw ConfigError("resolution " + std::to_string(r) + " is not a multiple of the patch size");
      }
      rows = cost::dit_sweep(options.resolutions);
      for (const auto r : options.resolutions) params.push_back(cost::count_dit(768, 12, 4, r).parameters);
    } else if (options.arch == "hdit") {
      const ModelConfig base =
          options.config ? load_run_config(*options.config).model : presets::by_name(options.preset);
      base.validate();
      rows = cost::scaling_sweep(base, options.resolutions);
      for (const auto r : options.resolutions) params.push_back(cost::count_parameters(adapt_resolution(base, r)));
    } else {
      throw ConfigError("--arch must be dit or hdit");
    }

    out << std::left << std::setw(8) << "res" << std::right << std::setw(12) << "GFLOP" << std::setw(16)
        << "parameters" << std::setw(12) << "reduction" << "\n";
    out << std::fixed;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out << std::left << std::setw(8) << rows[i].resolution << std::right << std::setw(12) << std::setprecision(2)
          << rows[i].gflop << std::setw(16) << params[i] << std::setw(11) << std::setprecision(2)
          << rows[i].reduction << "%\n";
    }
    out.unsetf(std::ios::fixed);
    if (options.csv) {
      std::ofstream csv(*options.csv);
      if (!csv) throw IoError("cannot write " + options.csv->string());
      csv << cost::sweep_csv(rows);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    out << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    out << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace hdit::cli
