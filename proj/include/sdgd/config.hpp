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

#ifndef SDGD_CONFIG_HPP_
#define SDGD_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sdgd/env.hpp"
#include "sdgd/planner.hpp"

namespace sdgd {

// Structured run configuration: UTF-8 "key = value" lines grouped under
// [section] headers. Unknown sections or keys are rejected with a message
// naming them, as are values violating the type invariants.

struct RunConfig {
  // [env]
  std::string env_id = "ChainVel1D";
  int episode_len = 64;
  // [data]
  int n_episodes = 100;
  double mix_safe = 0.4;
  double mix_greedy = 0.3;
  double mix_random = 0.3;
  int horizon = 32;  // L
  int stride = 4;
  // [diffusion]
  int n_diffusion_steps = 100;  // N
  int train_steps = 30000;
  double lr = 3e-4;
  int batch = 128;
  double p_uncond = 0.25;
  // [guidance]
  double w = 4.0;
  double lambda = 0.04;
  int feasible_len = 8;
  std::optional<double> r_us;  // nullopt = "auto" -> bound with 5% margin
  // [planner]
  double limit = 2.0;
  std::optional<std::string> schedule_text;  // "k:l,k:l,..."; overrides limit
  int episodes = 20;
  ConditionMode mode = ConditionMode::Decrement;
  // [seed]
  std::uint64_t seed = 0;

  EnvSpec env_spec() const;
  BudgetSchedule budget_schedule() const;  // from schedule_text or limit
  GuidanceConfig guidance(double resolved_r_us) const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Canonical dump; hashing this plus the seed gives the config hash recorded
// in every output sidecar.
std::string dump_config(const RunConfig& cfg);

BudgetSchedule parse_schedule_text(const std::string& text, int episode_len);

}  // namespace sdgd

#endif  // SDGD_CONFIG_HPP_
