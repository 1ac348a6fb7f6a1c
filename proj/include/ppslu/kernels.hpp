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

#pragma once

#include <cstddef>
#include <functional>

namespace ppslu::kernels {

// Every kernel has a serial reference and an OpenMP version. Both evaluate each
// output element with the same summation order, so their results are
// bit-identical for any thread count.
enum class Policy { kSerial, kParallel };

void set_default_policy(Policy policy);
Policy default_policy();
int max_threads();

// C[m x n] = beta * C + op(A) * op(B); beta is 0 or 1.
// op(A) is m x k (A stored k x m when trans_a), op(B) is k x n (B stored n x k
// when trans_b). All row-major, densely packed.
struct Gemm {
  std::size_t m = 0, n = 0, k = 0;
  const double* a = nullptr;
  const double* b = nullptr;
  double* c = nullptr;
  bool trans_a = false;
  bool trans_b = false;
  bool accumulate = false;
};

namespace serial {
void gemm(const Gemm& g);
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn);
}  // namespace serial

namespace parallel {
void gemm(const Gemm& g);
// Dynamic schedule; fn(i) must only write state owned by index i.
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn);
}  // namespace parallel

// Dispatch on the default policy. Falls back to serial inside an active
// parallel region and for problems too small to amortize a fork.
void gemm(const Gemm& g);
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn);
void for_each_index(std::size_t n, const std::function<void(std::size_t)>& fn, Policy policy);

}  // namespace ppslu::kernels
