// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes.

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "hdit/checkpoint.hpp"
#include "hdit/cost_model.hpp"
#include "hdit/dataset.hpp"
#include "hdit/diffusion.hpp"
#include "hdit/model.hpp"
#include "hdit/parallel.hpp"
#include "run_config.hpp"
#include "verify.hpp"

namespace fs = std::filesystem;
using namespace hdit;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[x] ";
    }
    detail << what << "; ";
  }
};

std::string fmt(double v, int digits = 2) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

bool within(double got, double want, double rel) { return std::abs(got / want - 1.0) <= rel; }

double cpu_seconds() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return static_cast<double>(u.ru_utime.tv_sec + u.ru_stime.tv_sec) +
         1e-6 * static_cast<double>(u.ru_utime.tv_usec + u.ru_stime.tv_usec);
}

Outcome cost_table() {
  Outcome o;
  const std::int64_t res[] = {128, 256, 512};
  const double dit[] = {106, 657, 6341}, hdit[] = {31, 65, 198};
  const ModelConfig e = presets::imagenet128();
  for (int i = 0; i < 3; ++i) {
    const double g = cost::count_dit(768, 12, 4, res[i]).gflop();
    o.require(within(g, dit[i], 0.05), "DiT-B/4@" + std::to_string(res[i]) + " " + fmt(g));
  }
  for (int i = 0; i < 3; ++i) {
    const double g = cost::count_hdit(adapt_resolution(e, res[i]), res[i]).gflop();
    o.require(within(g, hdit[i], 0.10), "E@" + std::to_string(res[i]) + " " + fmt(g));
  }
  const double a = cost::count_hdit(presets::ablation_global(), 128).gflop();
  o.require(within(a, 32, 0.10), "A@128 " + fmt(a));
  return o;
}

Outcome scaling() {
  Outcome o;
  const auto rows = cost::scaling_sweep(presets::imagenet128(), {128, 256, 512, 1024});
  const double floor[] = {68, 88, 96, 98.5};
  for (int i = 0; i < 4; ++i) {
    o.require(rows[i].reduction >= floor[i],
              "reduction@" + std::to_string(rows[i].resolution) + " " + fmt(rows[i].reduction) + "%");
  }
  const auto rep = cost::asymptotic_check(presets::imagenet128(), 4);
  o.require(rep.hdit_ratio >= 4.0 && rep.hdit_ratio <= 4.8, "HDiT 1024->2048 ratio " + fmt(rep.hdit_ratio, 3));
  o.require(rep.dit_ratio > 10.0, "DiT 1024->2048 ratio " + fmt(rep.dit_ratio, 1));
  return o;
}

Outcome parameter_counts() {
  Outcome o;
  const std::pair<const char*, double> targets[] = {{"imagenet128", 117e6}, {"ffhq1024", 85e6}, {"imagenet256", 557e6}};
  for (const auto& [name, want] : targets) {
    const ModelConfig cfg = presets::by_name(name);
    const std::int64_t built = HDiTModel<float>(cfg, 0).parameter_count();
    const std::int64_t analytic = cost::count_parameters(cfg);
    o.require(within(static_cast<double>(built), want, 0.03),
              std::string(name) + " " + std::to_string(built) + " vs " + fmt(want / 1e6, 0) + "M");
    o.require(built == analytic, std::string(name) + " builder == analytic");
  }
  return o;
}

Outcome suite(const std::string& name, double limit_seconds = 0) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = cli::run_suite(name);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  int passed = 0;
  for (const auto& r : results) {
    passed += r.passed;
    if (!r.passed) o.require(false, r.name + " " + r.detail);
  }
  o.require(passed == static_cast<int>(results.size()),
            std::to_string(passed) + "/" + std::to_string(results.size()) + " checks");
  if (limit_seconds > 0) o.require(secs < limit_seconds, fmt(secs, 1) + " s");
  return o;
}

Outcome diffusion_math() {
  Outcome o;
  DiffusionConfig soft, hard;
  hard.weighting = LossWeighting::min_snr;
  o.require(loss_weight(0.5, soft) == 2.0, "w(0.5)=" + fmt(loss_weight(0.5, soft), 6));
  o.require(std::abs(loss_weight(0.1, soft) - 3.846) <= 1e-3, "w(0.1)=" + fmt(loss_weight(0.1, soft), 6));
  o.require(std::abs(loss_weight(10.0, soft) - 0.009975) <= 1e-6, "w(10)=" + fmt(loss_weight(10.0, soft), 8));
  for (const double s : {0.1, 10.0}) {
    const double rel = std::abs(loss_weight(s, soft) / loss_weight(s, hard) - 1.0);
    o.require(rel < 0.05, "min/soft at " + fmt(s, 1) + " differ " + fmt(100 * rel) + "%");
  }
  std::vector<double> draws;
  for (std::uint64_t step = 0; draws.size() < 100000; ++step) {
    auto rng = RngStream::for_step(11, StreamPurpose::sigma, step);
    for (const double v : sample_sigma(32, soft, rng)) draws.push_back(v);
  }
  draws.resize(100000);
  std::sort(draws.begin(), draws.end());
  double d = 0;
  const double n = static_cast<double>(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double f = 2.0 / std::numbers::pi * std::atan(draws[i] / soft.sigma_data);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
  }
  o.require(d < 0.01, "KS D=" + fmt(d, 5));
  return o;
}

std::vector<double> metric_losses(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<double> loss;
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.find(',', a + 1);
    loss.push_back(std::stod(line.substr(a + 1, b - a - 1)));
  }
  return loss;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

double shape_accuracy(const cli::RunConfig& cfg, const fs::path& ckpt_path) {
  // Threshold fitted on fresh generated images, independent of the training set.
  auto fit_rng = RngStream::for_step(cfg.train.seed + 1000, StreamPurpose::test, 0);
  const Dataset ref = gen_shapes(1000, cfg.model.resolution, fit_rng);
  const std::int64_t res = cfg.model.resolution, per = res * res * cfg.model.in_channels;
  auto stat = [&](const Tensor<float>& batch, std::int64_t i) {
    std::vector<float> one(batch.data().begin() + i * per, batch.data().begin() + (i + 1) * per);
    return radial_variance(Tensor<float>({res, res, cfg.model.in_channels}, std::move(one)));
  };
  std::vector<double> stats;
  for (std::int64_t i = 0; i < ref.size(); ++i) stats.push_back(stat(ref.images, i));
  const auto clf = ShapeClassifier::fit(stats, ref.labels);

  HDiTModel<float> model(cfg.model, cfg.train.seed);
  load_params(Checkpoint::load(ckpt_path), "ema.", model.parameters());
  std::vector<std::int64_t> ids;
  for (std::int64_t k = 0; k < 2; ++k)
    for (int i = 0; i < 64; ++i) ids.push_back(k);
  const Tensor<float> samples = cli::generate(model, cfg.sampler, cfg.diffusion.sigma_data, ids, 4242);
  int correct = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) correct += clf.classify(stat(samples, static_cast<std::int64_t>(i))) == ids[i];
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

Outcome smoke_training(const fs::path& work) {
  Outcome o;
  cli::RunConfig cfg = cli::load_run_config(fs::path(HDIT_SOURCE_DIR) / "configs" / "smoke.ini");
  const bool spec_shape = cfg.model.levels.size() == 2 && cfg.model.levels[0].width == 64 &&
                          cfg.model.levels[1].width == 128 && cfg.model.levels[0].depth == 1 &&
                          cfg.model.levels[1].depth == 2 && cfg.model.resolution == 32 &&
                          cfg.train.batch_size == 32 && cfg.train.steps == 2000 && cfg.data.source == "shapes";
  o.require(spec_shape, "config widths [64,128] depths [1,2] 32px batch 32 2000 steps");
  const std::int64_t total_steps = cfg.train.steps;

  fs::remove_all(work);
  cfg.train.checkpoint_dir = (work / "main").string();
  cfg.train.output_dir = (work / "main" / "samples").string();
  cfg.train.checkpoint_every = 100;
  cfg.train.keep_checkpoints = true;
  cfg.train.sample_every = 0;

  // Interrupted run: 50 steps, then resume to the end.
  std::ostringstream log;
  const double cpu0 = cpu_seconds();
  cfg.train.steps = 50;
  int rc = cli::run_train(cfg, log);
  cfg.train.steps = total_steps;
  if (rc == cli::kExitOk) rc = cli::run_train(cfg, log);
  const double cpu = cpu_seconds() - cpu0;
  if (rc != cli::kExitOk) {
    o.require(false, "training exited " + std::to_string(rc) + ": " + log.str());
    return o;
  }

  const auto loss = metric_losses(work / "main" / cli::kMetricsFile);
  if (static_cast<std::int64_t>(loss.size()) != total_steps) {
    o.require(false, "metrics rows " + std::to_string(loss.size()));
    return o;
  }
  auto window_mean = [&](std::size_t first, std::size_t last) {  // 1-based, inclusive
    double s = 0;
    for (std::size_t i = first; i <= last; ++i) s += loss[i - 1];
    return s / static_cast<double>(last - first + 1);
  };
  const double early = window_mean(1, 100), late = window_mean(total_steps - 99, total_steps);
  o.require(late < 0.5 * early, "(a) loss " + fmt(early, 4) + " -> " + fmt(late, 4) + " ratio " + fmt(late / early, 3));

  const double acc = shape_accuracy(cfg, work / "main" / cli::kLatestCheckpoint);
  o.require(acc >= 0.8, "(b) shape accuracy " + fmt(100 * acc, 1) + "%");
  o.require(cpu < 1800.0, "(c) training CPU " + fmt(cpu / 60.0, 1) + " min");

  // Uninterrupted reference to step 100.
  cli::RunConfig ref = cfg;
  ref.train.checkpoint_dir = (work / "straight").string();
  ref.train.output_dir = (work / "straight" / "samples").string();
  ref.train.steps = 100;
  ref.train.keep_checkpoints = false;
  std::ostringstream ref_log;
  rc = cli::run_train(ref, ref_log);
  const bool same = rc == cli::kExitOk &&
                    slurp(work / "straight" / cli::kLatestCheckpoint) == slurp(work / "main" / "step_000100.ckpt");
  o.require(same, "(d) resumed step-100 checkpoint bit-identical to uninterrupted");
  return o;
}

}  // namespace

int main() {
  tune_allocator();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 cost-table", cost_table},
      {"2 scaling", scaling},
      {"3 parameter-counts", parameter_counts},
      {"4 oracle-equivalences", [] { return suite("oracle"); }},
      {"5 gradient-suite", [] { return suite("grad", 300.0); }},
      {"6 structural-invariants", [] { return suite("invariants"); }},
      {"7 diffusion-math", diffusion_math},
      {"8 smoke-training", [] { return smoke_training(fs::path(HDIT_WORK_DIR) / "acceptance_smoke"); }},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
