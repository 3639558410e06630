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

#ifndef SDGD_RNG_HPP_
#define SDGD_RNG_HPP_

#include <array>
#include <cstdint>
#include <span>

namespace sdgd {

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// stable across standard-library versions; every randomized component takes
// an explicit seed and derives child streams with mix_seed, which keeps
// parallel work reproducible regardless of thread count.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform01();                       // [0, 1)
  double uniform(double lo, double hi);     // [lo, hi)
  std::size_t uniform_index(std::size_t n); // [0, n)
  double normal();                          // standard normal, Box-Muller
  void fill_normal(std::span<double> out);

 private:
  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Deterministic seed derivation for child streams (episodes, trials, ...).
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace sdgd

#endif  // SDGD_RNG_HPP_
