// Copyright 2026 The PPSLU Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ppslu/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <atomic>
#include <exception>
#include <vector>

namespace ppslu::kernels {
namespace {

std::atomic<Policy> g_policy{Policy::kParallel};

constexpr std::size_t kParallelGemmWork = 1u << 16;

bool in_parallel_region() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

void gemm_rows(const Gemm& g, std::size_t row_begin, std::size_t row_end) {
  const std::size_t m = g.m, n = g.n, k = g.k;
  for (std::size_t i = row_begin; i < row_end; ++i) {
    double* crow = g.c + i * n;
    if (!g.accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    }
    if (!g.trans_b) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = g.trans_a ? g.a[p * m + i] : g.a[i * k + p];
        const double* brow = g.b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = g.b + j * k;
        double acc = 0.0;
        if (g.trans_a) {
          for (std::size_t p = 0; p < k; ++p) acc += g.a[p * m + i] * brow[p];
        } else {
          const double* arow = g.a + i * k;
          for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        }
        crow[j] += acc;
      }
    }
  }
}

}  // namespace

void set_default_policy(Policy policy) { g_policy.store(policy); }
Policy default_policy() { return g_policy.load(); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void gemm(const Gemm& g) { gemm_rows(g, 0, g.m); }

void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn) {
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace serial

namespace parallel {

void gemm(const Gemm& g) {
  const auto rows = static_cast<std::ptrdiff_t>(g.m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    gemm_rows(g, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1);
  }
}

void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn) {
  // Exceptions may not cross the region boundary; keep the one from the
  // lowest index so failures are reported the same way as the serial loop.
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace parallel

void gemm(const Gemm& g) {
  if (default_policy() == Policy::kParallel && !in_parallel_region() && max_threads() > 1 &&
      g.m > 1 && g.m * g.n * g.k >= kParallelGemmWork) {
    parallel::gemm(g);
  } else {
    serial::gemm(g);
  }
}

void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn) {
  for_each_index(n, fn, default_policy());
}

void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn, Policy policy) {
  if (policy == Policy::kParallel && !in_parallel_region() && max_threads() > 1 && n > 1) {
    parallel::for_each_index(n, fn);
  } else {
    serial::for_each_index(n, fn);
  }
}

}  // namespace ppslu::kernels
