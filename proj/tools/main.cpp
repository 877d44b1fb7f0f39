// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "hdit/parallel.hpp"
#include "verify.hpp"

int main(int argc, char** argv) {
  using namespace hdit::cli;
  CLI::App app{"hdit: hourglass diffusion transformer toolkit"};
  app.require_subcommand(1);

  std::string config_path;

  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("config", config_path, "run config (INI)")->required();

  SampleOptions sample_opts;
  std::string checkpoint, out_dir;
  std::int64_t seed = -1;
  double cfg_scale = -1;
  auto* sample = app.add_subcommand("sample", "write samples from a checkpoint");
  sample->add_option("config", config_path, "run config (INI)")->required();
  sample->add_option("--checkpoint", checkpoint, "checkpoint file (default <checkpoint_dir>/latest.ckpt)");
  sample->add_option("--class", sample_opts.class_id, "class id, -1 for unconditional")->default_val(-1);
  sample->add_option("--count", sample_opts.count, "number of images")->default_val(8);
  sample->add_option("--cfg-scale", cfg_scale, "guidance scale (default from config)");
  sample->add_option("--seed", seed, "noise seed (default from config)");
  sample->add_option("--out", out_dir, "output directory (default from config)");
  sample->add_flag("--raw", sample_opts.raw_weights, "use raw weights instead of the EMA");

  CostOptions cost_opts;
  std::string cost_config, csv;
  auto* cost = app.add_subcommand("cost", "FLOP and parameter sweep");
  cost->add_option("--arch", cost_opts.arch, "dit or hdit")->check(CLI::IsMember({"dit", "hdit"}));
  cost->add_option("--config", cost_config, "run config whose [model] section to use");
  cost->add_option("--preset", cost_opts.preset, "model preset when no config is given");
  cost->add_option("--resolutions", cost_opts.resolutions, "comma-separated list")->delimiter(',');
  cost->add_option("--csv", csv, "write x,y,r CSV here");

  std::string suite = "all";
  VerifyOptions verify_opts;
  std::string inject;
  auto* verify = app.add_subcommand("verify", "run property and oracle suites");
  verify->add_option("--suite", suite, "grad, oracle, invariants or all")
      ->check(CLI::IsMember({"grad", "oracle", "invariants", "all"}));
  verify->add_option("--inject", inject, "plant a fault (tau_negative)")->check(CLI::IsMember({"tau_negative"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  hdit::tune_allocator();
  if (const char* threads = std::getenv("HDIT_THREADS")) {
    const int n = std::atoi(threads);
    if (n > 0) hdit::set_kernel_threads(n);
  }

  try {
    if (*train) return cmd_train(config_path, std::cout);
    if (*sample) {
      if (!checkpoint.empty()) sample_opts.checkpoint = checkpoint;
      if (!out_dir.empty()) sample_opts.out_dir = out_dir;
      if (seed >= 0) sample_opts.seed = static_cast<std::uint64_t>(seed);
      if (cfg_scale >= 0) sample_opts.cfg_scale = cfg_scale;
      return cmd_sample(config_path, sample_opts, std::cout);
    }
    if (*cost) {
      if (!cost_config.empty()) cost_opts.config = cost_config;
      if (!csv.empty()) cost_opts.csv = csv;
      return cmd_cost(cost_opts, std::cout);
    }
    if (*verify) {
      verify_opts.inject_tau_negative = inject == "tau_negative";
      return cmd_verify(suite, verify_opts, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
