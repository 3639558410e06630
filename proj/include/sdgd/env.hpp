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

#ifndef SDGD_ENV_HPP_
#define SDGD_ENV_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sdgd {

// Deterministic toy constrained-MDP environments with analytic reward and
// binary per-step cost, plus a smooth cost surrogate used by the diagnostic
// gradients.
//
// PointHazard2D: point mass on [-1,1]^2, per-axis moves clipped to +-0.1.
//   Goal (0.8, 0.8), reward is the potential difference |x-g| - |x'-g|,
//   cost 1 whenever the next position is inside the hazard disk of radius
//   0.35 around the origin.
// ChainVel1D: velocity v on [0,1], moves clipped to +-0.2. Reward v',
//   cost 1 whenever v' > 0.6, so return and cost are coupled by design.
enum class EnvId { PointHazard2D, ChainVel1D };

struct EnvSpec {
  EnvId id;
  int state_dim;
  int action_dim;
  int episode_len;      // T_ep
  double action_bound;  // symmetric per-dimension clip
};

struct StepResult {
  std::vector<double> next_state;
  double reward;
  double cost;  // 0 or 1
  bool done;
};

struct Episode {
  std::vector<std::vector<double>> states;   // episode_len + 1
  std::vector<std::vector<double>> actions;  // episode_len
  std::vector<double> rewards;
  std::vector<double> costs;
};

enum class PolicyId { Random, Greedy, Safe };

EnvSpec make_env_spec(EnvId id);
EnvId parse_env_id(std::string_view name);
std::string to_string(EnvId id);
PolicyId parse_policy_id(std::string_view name);
std::string to_string(PolicyId id);

// Fixed starts: PointHazard2D (-0.8, -0.8), ChainVel1D v = 0. The seed is
// accepted for interface uniformity; resets are deterministic.
std::vector<double> reset(const EnvSpec& spec, std::uint64_t seed);

// Throws std::invalid_argument on out-of-bounds states or dimension errors.
StepResult step(const EnvSpec& spec, std::span<const double> state,
                std::span<const double> action);

// Logistic surrogate of the hard cost with sharpness 20; hard cost 1 implies
// a value above 0.5. Gradient is analytic and matches the surrogate exactly.
double smooth_cost(const EnvSpec& spec, std::span<const double> state);
std::vector<double> smooth_cost_grad(const EnvSpec& spec,
                                     std::span<const double> state);

// Scripted behavior policies for offline data generation. Deterministic
// given the seed (only Random consumes it).
Episode rollout(const EnvSpec& spec, PolicyId policy, std::uint64_t seed);

}  // namespace sdgd

#endif  // SDGD_ENV_HPP_
