// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hdit::cli {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  /// Plants a negative attention scale in the model the invariants suite inspects.
  bool inject_tau_negative = false;
};

/// Central finite differences (binary64, h = 1e-5) against autodiff for every
/// block and a two-level toy model; relative error must stay below 1e-4.
std::vector<CheckResult> grad_suite(const VerifyOptions& options = {});
/// Kernels against brute-force or direct-formula references.
std::vector<CheckResult> oracle_suite(const VerifyOptions& options = {});
/// Structural and algebraic properties.
std::vector<CheckResult> invariant_suite(const VerifyOptions& options = {});

/// "grad", "oracle", "invariants" or "all"; throws ConfigError otherwise.
std::vector<CheckResult> run_suite(const std::string& suite, const VerifyOptions& options = {});

/// Prints one line per check and returns 0 only if every check passed.
int cmd_verify(const std::string& suite, const VerifyOptions& options, std::ostream& out);

}  // namespace hdit::cli
