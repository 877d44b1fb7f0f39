// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/parallel.hpp"

#include <malloc.h>
#include <omp.h>

#include <Eigen/Core>
#include <cstdlib>
#include <mutex>

namespace hdit {

namespace {

std::once_flag g_init;
int g_threads = 1;

void apply(int threads) {
  g_threads = threads < 1 ? 1 : threads;
  omp_set_num_threads(g_threads);
  Eigen::setNbThreads(g_threads);
}

void init_from_env() {
  int threads = omp_get_max_threads();
  if (const char* env = std::getenv("HDIT_THREADS")) {
    const int requested = std::atoi(env);
    if (requested > 0) threads = requested;
  }
  apply(threads);
}

}  // namespace

int kernel_threads() {
  std::call_once(g_init, init_from_env);
  return g_threads;
}

void set_kernel_threads(int threads) {
  std::call_once(g_init, init_from_env);
  apply(threads);
}

void tune_allocator() {
#if defined(__GLIBC__)
  // Activations of a training step are tens of MB in short-lived buffers;
  // keeping them on the heap avoids an mmap/munmap and page-fault cycle per op.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace hdit
