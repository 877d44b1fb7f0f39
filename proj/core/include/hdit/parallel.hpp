// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace hdit {

/// Thread cap for kernels. Reads HDIT_THREADS on first use; falls back to
/// the OpenMP default. Kernels partition work by output element so results do
/// not depend on this value.
int kernel_threads();
void set_kernel_threads(int threads);

/// Process-wide allocator settings suited to training (no-op off glibc).
/// Meant for executables; the library never calls it itself.
void tune_allocator();

}  // namespace hdit
