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

#include <random>
#include <stdexcept>
#include <vector>

#include "gtest/gtest.h"

namespace ppslu::kernels {
namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

TEST(Gemm, SerialMatchesNaiveForEveryTransposeCombination) {
  std::mt19937_64 rng(11);
  const std::size_t m = 7, n = 5, k = 9;
  auto a = random_values(m * k, rng);
  auto b = random_values(k * n, rng);
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      std::vector<double> c(m * n, 0.5);
      serial::gemm({.m = m, .n = n, .k = k, .a = a.data(), .b = b.data(), .c = c.data(),
                    .trans_a = ta, .trans_b = tb, .accumulate = true});
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.5;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = ta ? a[p * m + i] : a[i * k + p];
            const double bv = tb ? b[j * k + p] : b[p * n + j];
            s += av * bv;
          }
          EXPECT_NEAR(c[i * n + j], s, 1e-13);
        }
      }
    }
  }
}

TEST(Gemm, ParallelIsBitIdenticalToSerial) {
  std::mt19937_64 rng(12);
  const std::size_t m = 61, n = 47, k = 53;
  auto a = random_values(m * k, rng);
  auto b = random_values(k * n, rng);
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      std::vector<double> c1(m * n), c2(m * n);
      Gemm g{.m = m, .n = n, .k = k, .a = a.data(), .b = b.data(), .trans_a = ta, .trans_b = tb};
      g.c = c1.data();
      serial::gemm(g);
      g.c = c2.data();
      parallel::gemm(g);
      EXPECT_EQ(c1, c2);
    }
  }
}

TEST(ForEachIndex, ParallelCoversEveryIndexOnce) {
  std::vector<int> hits(1000, 0);
  parallel::for_each_index(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(ForEachIndex, ExceptionFromLowestIndexIsRethrown) {
  try {
    parallel::for_each_index(64, [](std::size_t i) {
      if (i == 10 || i == 40) throw std::runtime_error("index " + std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "index 10");
  }
}

}  // namespace
}  // namespace ppslu::kernels
