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

#ifndef SDGD_PLANNER_HPP_
#define SDGD_PLANNER_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "sdgd/dataset.hpp"
#include "sdgd/diffusion.hpp"
#include "sdgd/env.hpp"
#include "sdgd/guidance.hpp"

namespace sdgd {

// Receding-horizon execution: sample an L-step plan, execute its first f
// actions, track consumed budget against piecewise time-varying limits,
// replan.

struct BudgetSegment {
  int start = 0;      // environment step where this limit becomes active
  double limit = 0.0;
  int horizon = 0;    // T_k, steps covered
};

struct BudgetSchedule {
  std::vector<BudgetSegment> segments;

  static BudgetSchedule single(double limit, int episode_len);
  // Starts strictly increasing from 0, limits >= 0; horizons filled so the
  // schedule covers [0, episode_len).
  void validate(int episode_len) const;
  int active_index(int t) const;  // throws when t is uncovered
};

// The next plan's condition: Decrement uses the remaining budget of the
// active schedule segment, Static the active limit itself.
enum class ConditionMode { Decrement, Static };

enum class PlanVariant {
  Sdgd,     // CFG on the cost limit + FTR reward gradient
  NoCg,     // lambda = 0
  NoCfg,    // unconditional pathway + reward gradient only
  Swapped,  // CFG on return, hinge classifier gradient on cost
};

struct PlannerConfig {
  int horizon = 32;        // L
  int exec_prefix = 8;     // f, also the replan interval
  GuidanceConfig guidance;
  ConditionMode mode = ConditionMode::Decrement;
  PlanVariant variant = PlanVariant::Sdgd;
  double swapped_target_return = 1.0;  // normalized condition for Swapped
};

struct PlannerModels {
  const NoiseSchedule* schedule = nullptr;
  const Denoiser* denoiser = nullptr;        // cost-limit conditioned
  const ScalarModel* reward = nullptr;       // FTR (or raw for ablations)
  const Denoiser* denoiser_ret = nullptr;    // Swapped only
  const ScalarModel* cost = nullptr;         // Swapped only
  double c_max_seg = 0.0;                    // limit normalization scale
};

struct ReplanLog {
  int t = 0;
  double active_limit = 0.0;
  double remaining = 0.0;
  double cond_limit = 0.0;  // raw-unit condition fed to the sampler
  std::vector<double> plan;  // denormalized flat segment
  double realized_reward = 0.0;  // over the executed prefix
  double realized_cost = 0.0;
  int clip_events = 0;  // planned actions clipped by env bounds
};

struct EpisodeRecord {
  Episode episode;
  std::vector<ReplanLog> replans;
  std::vector<double> segment_costs;  // realized cost per schedule segment
  double total_reward = 0.0;
  double total_cost = 0.0;
  std::uint64_t seed = 0;
};

// limit_active(t) minus cost consumed since that segment started, clamped
// at zero.
double remaining_budget(const BudgetSchedule& schedule, int t,
                        std::span<const double> consumed_per_segment);

// One sample call conditioned on the budget (normalized by c_max_seg), with
// the current state inpainted at position 0 and the guidance hook carrying
// the adjustment beyond the plain conditional score. Returns the
// denormalized flat plan.
std::vector<double> plan_segment(const PlannerModels& models,
                                 const PlannerConfig& cfg,
                                 std::span<const double> state, double budget,
                                 std::uint64_t seed);

EpisodeRecord run_episode(const EnvSpec& env, const PlannerModels& models,
                          const PlannerConfig& cfg,
                          const BudgetSchedule& schedule, std::uint64_t seed);

// Episodes run in parallel with per-index seeds; aggregation is in index
// order.
std::vector<EpisodeRecord> evaluate(const EnvSpec& env,
                                    const PlannerModels& models,
                                    const PlannerConfig& cfg,
                                    const BudgetSchedule& schedule,
                                    int n_episodes, std::uint64_t base_seed);

struct NormalizationRef {
  double r_rand = 0.0;  // mean random-policy return, 1000 episodes
  double r_best = 0.0;  // best episode return in the offline dataset
};

NormalizationRef compute_normalization_ref(const EnvSpec& env,
                                           const Dataset& ds);

struct Metrics {
  double normalized_reward = 0.0;
  double normalized_cost = 0.0;
  double mean_return = 0.0;
  double mean_cost = 0.0;
  double se_return = 0.0;  // standard error of the mean
  double se_cost = 0.0;
  bool cost_flagged = false;  // limit was zero, normalized_cost is raw cost
};

Metrics normalized_metrics(std::span<const EpisodeRecord> records,
                           const NormalizationRef& ref, double limit);

}  // namespace sdgd

#endif  // SDGD_PLANNER_HPP_
