// Copyright 2026 The SDGD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <vector>

#include <doctest.h>

#include "sdgd/parallel.hpp"
#include "sdgd/rng.hpp"

using namespace sdgd;

TEST_SUITE_BEGIN("rng_parallel");

TEST_CASE("streams are deterministic per seed and distinct across seeds") {
  Rng a(1), b(1), c(2);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
  }
  bool differs = false;
  Rng a2(1);
  for (int i = 0; i < 10; ++i) differs |= a2.next_u64() != c.next_u64();
  CHECK(differs);
}

TEST_CASE("normal draws have sane moments") {
  Rng rng(99);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("uniform_index stays in range and covers the support") {
  Rng rng(5);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) hits[rng.uniform_index(7)] += 1;
  for (int h : hits) CHECK(h > 800);
}

TEST_CASE("mix_seed separates streams") {
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) != mix_seed(2, 0));
  CHECK(mix_seed(1, 5) == mix_seed(1, 5));
}

TEST_CASE("parallel_for covers every index exactly once in both modes") {
  for (auto mode : {par::Mode::Serial, par::Mode::OpenMP}) {
    const auto saved = par::mode();
    par::set_mode(mode);
    std::vector<int> hits(1000, 0);
    par::parallel_for(1000, [&](std::int64_t i) { hits[i] += 1; });
    par::set_mode(saved);
    for (int h : hits) CHECK(h == 1);
  }
}

TEST_CASE("openmp availability is reported") {
  // built with OpenMP in this project; serial mode must still work
  const auto saved = par::mode();
  par::set_mode(par::Mode::Serial);
  CHECK(par::mode() == par::Mode::Serial);
  par::set_mode(saved);
  CHECK(par::max_threads() >= 1);
}

TEST_SUITE_END();
