// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "commands.hpp"
#include "hdit/checkpoint.hpp"
#include "hdit/error.hpp"
#include "hdit/ppm.hpp"
#include "run_config.hpp"
#include "verify.hpp"

namespace hdit::cli {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("hdit_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string tiny_config(const fs::path& dir, std::int64_t steps, const std::string& extra_train = "") {
  std::ostringstream s;
  s << "[model]\npreset = smoke\nresolution = 16\nwidths = [16, 16]\ndepths = [1, 1]\n"
    << "attention = [neighborhood, global]\nattention_size = [3, 0]\nhead_dim = 8\nmapping_width = 16\n"
    << "[sampler]\nsteps = 3\n"
    << "[data]\nsize = 32\n"
    << "[train]\nseed = 2\nbatch_size = 4\nlog_interval = 5\ncheckpoint_every = 0\nsteps = " << steps << "\n"
    << "checkpoint_dir = " << (dir / "run").string() << "\noutput_dir = " << (dir / "out").string() << "\n"
    << extra_train;
  return s.str();
}

fs::path write(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int count_lines(const fs::path& path) {
  std::ifstream in(path);
  int n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

TEST(RunConfig, SerializeRoundTrip) {
  RunConfig cfg = parse_run_config(tiny_config("/tmp/x", 7));
  cfg.diffusion.shift_base = 64;
  cfg.optimizer.lr = 1.0 / 3.0;
  EXPECT_EQ(parse_run_config(serialize(cfg)), cfg);
  EXPECT_EQ(cfg.model.levels[0].attention.size, 3);
  EXPECT_EQ(cfg.train.steps, 7);
  EXPECT_EQ(cfg.diffusion.resolution, 16);
}

TEST(RunConfig, RejectsBadInput) {
  EXPECT_THROW(parse_run_config("[model]\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[nowhere]\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[train]\nsteps = ten\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[train]\nsteps = 1\nsteps = 2\n"), ConfigError);
  EXPECT_THROW(parse_run_config("steps = 1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[model]\nwidths = [64, 128, 256]\n"), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/run.ini"), ConfigError);
}

TEST(RunConfig, CommentsAndDefaults) {
  const RunConfig cfg = parse_run_config("# top\n[train]\nsteps = 3  # inline\n");
  EXPECT_EQ(cfg.train.steps, 3);
  EXPECT_EQ(cfg.train.batch_size, TrainConfig{}.batch_size);
}

TEST(Train, WritesOneMetricsRowPerStep) {
  const fs::path dir = scratch("rows");
  std::ostringstream log;
  ASSERT_EQ(cmd_train(write(dir / "c.ini", tiny_config(dir, 10)), log), kExitOk) << log.str();
  EXPECT_EQ(count_lines(dir / "run" / kMetricsFile), 11);
  EXPECT_TRUE(fs::exists(dir / "run" / kLatestCheckpoint));
  EXPECT_FALSE(fs::exists(dir / "run" / kLockFile));
  EXPECT_NE(log.str().find("step 10"), std::string::npos);
}

TEST(Train, MissingDatasetIsAConfigError) {
  const fs::path dir = scratch("missing");
  std::string text = tiny_config(dir, 2);
  text.replace(text.find("size = 32"), 9, "source = " + (dir / "no_such_folder").string());
  std::ostringstream log;
  EXPECT_EQ(cmd_train(write(dir / "c.ini", text), log), kExitConfig);
  EXPECT_EQ(cmd_train(dir / "absent.ini", log), kExitConfig);
}

TEST(Train, ExistingLockRefusesToStart) {
  const fs::path dir = scratch("lock");
  fs::create_directories(dir / "run");
  std::ofstream(dir / "run" / kLockFile) << "1";
  std::ostringstream log;
  EXPECT_EQ(cmd_train(write(dir / "c.ini", tiny_config(dir, 2)), log), kExitConfig);
}

TEST(Train, ResumeMatchesUninterrupted) {
  const fs::path a = scratch("resume_a"), b = scratch("resume_b");
  std::ostringstream log;
  ASSERT_EQ(cmd_train(write(a / "c.ini", tiny_config(a, 10)), log), kExitOk);
  ASSERT_EQ(cmd_train(write(b / "c5.ini", tiny_config(b, 5)), log), kExitOk);
  ASSERT_EQ(cmd_train(write(b / "c10.ini", tiny_config(b, 10)), log), kExitOk);
  EXPECT_NE(log.str().find("resuming from step 5"), std::string::npos);
  EXPECT_EQ(slurp(a / "run" / kLatestCheckpoint), slurp(b / "run" / kLatestCheckpoint));
  EXPECT_EQ(slurp(a / "run" / kMetricsFile), slurp(b / "run" / kMetricsFile));
}

TEST(Sample, DeterministicAndGuidanceSensitive) {
  const fs::path dir = scratch("sample");
  std::ostringstream log;
  const fs::path cfg = write(dir / "c.ini", tiny_config(dir, 3));
  ASSERT_EQ(cmd_train(cfg, log), kExitOk);
  SampleOptions opt;
  opt.class_id = 1;
  opt.count = 2;
  opt.seed = 5;
  opt.out_dir = dir / "s1";
  ASSERT_EQ(cmd_sample(cfg, opt, log), kExitOk) << log.str();
  opt.out_dir = dir / "s2";
  ASSERT_EQ(cmd_sample(cfg, opt, log), kExitOk);
  EXPECT_EQ(slurp(dir / "s1" / "sample_5_0.ppm"), slurp(dir / "s2" / "sample_5_0.ppm"));
  EXPECT_NE(slurp(dir / "s1" / "sample_5_0.ppm"), slurp(dir / "s1" / "sample_5_1.ppm"));

  // Raw weights after a few steps differ from the EMA shadow, and the
  // unconditional branch (scale 0) differs from the conditional one (scale 1).
  opt.cfg_scale = 0.0;
  opt.raw_weights = true;
  opt.out_dir = dir / "u";
  ASSERT_EQ(cmd_sample(cfg, opt, log), kExitOk);
  opt.cfg_scale = 1.0;
  opt.out_dir = dir / "c";
  ASSERT_EQ(cmd_sample(cfg, opt, log), kExitOk);
  const Image8 u = read_ppm(dir / "u" / "sample_5_0.ppm"), c = read_ppm(dir / "c" / "sample_5_0.ppm");
  EXPECT_EQ(u.width, 16);
  EXPECT_NE(u.rgb, c.rgb);
}

TEST(Sample, EdgeCases) {
  const fs::path dir = scratch("sample_edges");
  std::ostringstream log;
  const fs::path cfg = write(dir / "c.ini", tiny_config(dir, 1));
  SampleOptions opt;
  EXPECT_EQ(cmd_sample(cfg, opt, log), kExitConfig);  // no checkpoint yet
  ASSERT_EQ(cmd_train(cfg, log), kExitOk);
  opt.count = 0;
  opt.out_dir = dir / "none";
  EXPECT_EQ(cmd_sample(cfg, opt, log), kExitOk);
  EXPECT_FALSE(fs::exists(dir / "none"));
  opt.count = 1;
  opt.class_id = 2;
  EXPECT_EQ(cmd_sample(cfg, opt, log), kExitConfig);
}

TEST(Cost, PrintsOneRowPerResolution) {
  std::ostringstream out;
  const fs::path dir = scratch("cost");
  CostOptions opt;
  opt.resolutions = {128, 256};
  opt.csv = dir / "sweep.csv";
  ASSERT_EQ(cmd_cost(opt, out), kExitOk);
  const std::string table = out.str();
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
  EXPECT_EQ(count_lines(dir / "sweep.csv"), 3);
  opt.arch = "dit";
  opt.csv.reset();
  std::ostringstream dit;
  EXPECT_EQ(cmd_cost(opt, dit), kExitOk);
  EXPECT_NE(dit.str().find("106.38"), std::string::npos);
  opt.resolutions = {130};
  EXPECT_EQ(cmd_cost(opt, dit), kExitConfig);
  opt.arch = "unet";
  EXPECT_EQ(cmd_cost(opt, dit), kExitConfig);
}

TEST(Verify, InjectedFaultIsCaught) {
  std::ostringstream out;
  EXPECT_EQ(cmd_verify("invariants", {}, out), 0) << out.str();
  VerifyOptions bad;
  bad.inject_tau_negative = true;
  std::ostringstream out2;
  EXPECT_EQ(cmd_verify("invariants", bad, out2), 1);
  EXPECT_NE(out2.str().find("[FAIL]"), std::string::npos);
  std::ostringstream out3;
  EXPECT_EQ(cmd_verify("nonsense", {}, out3), 2);
}

}  // namespace
}  // namespace hdit::cli
