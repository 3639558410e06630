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

#ifndef SDGD_DIAGNOSTICS_HPP_
#define SDGD_DIAGNOSTICS_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sdgd/dataset.hpp"
#include "sdgd/diffusion.hpp"
#include "sdgd/env.hpp"
#include "sdgd/guidance.hpp"

namespace sdgd {

// Empirical checks of the analysis: coupled-sampler cost drift, alignment
// between the cost and prefix-infeasibility surrogate gradients, cost
// classifier correlation across noise levels, and rollout error versus
// joint generation.

// --- Trajectory surrogates --------------------------------------------------
//
// Defined on the decoded x0 estimate of a flat normalized segment:
//   C_tilde = sum_t smooth_cost(state_t)
//   h_tilde = sigmoid(10 * sum_{t<f} smooth_cost(state_t) - 5)
// Gradients are analytic, taken w.r.t. the flat normalized segment through
// the denormalization map; action coordinates carry zero gradient.

double surrogate_cost(const EnvSpec& env, const DatasetStats& stats,
                      std::span<const double> flat_norm,
                      std::span<double> grad_out);
double surrogate_prefix_infeasibility(const EnvSpec& env,
                                      const DatasetStats& stats,
                                      std::span<const double> flat_norm,
                                      int feasible_len,
                                      std::span<double> grad_out);

// True cost of a plan: re-simulate its actions through the env from the
// given start; generated states are not trusted.
double resimulated_cost(const EnvSpec& env, std::span<const double> start,
                        std::span<const double> flat_plan, int horizon);

// --- Coupled drift (Proposition 1 direction) --------------------------------

struct DriftTrial {
  double cost_cond = 0.0;  // C(tau^C)
  double cost_raw = 0.0;   // C(tau^R)
  double cost_ftr = 0.0;   // C(tau^Rhat)
  double delta_raw() const { return cost_raw - cost_cond; }
  double delta_ftr() const { return cost_ftr - cost_cond; }
};

struct DriftReport {
  std::vector<DriftTrial> trials;
  double mean_delta_raw = 0.0;
  double mean_delta_ftr = 0.0;
  double se_delta_raw = 0.0;
  double se_delta_ftr = 0.0;
  // One-sided paired sign test of delta_ftr < delta_raw (small p rejects
  // mean(delta_ftr) >= mean(delta_raw)).
  double sign_test_p = 1.0;
  int n_positive = 0;  // trials with delta_raw > delta_ftr
  int n_nonzero = 0;
  std::uint64_t seed = 0;
};

struct DriftSetup {
  const NoiseSchedule* schedule = nullptr;
  const Denoiser* denoiser = nullptr;
  const ScalarModel* reward_raw = nullptr;
  const ScalarModel* reward_ftr = nullptr;
  double limit = 2.0;  // raw-unit condition for all three chains
  double c_max_seg = 1.0;
  GuidanceConfig guidance;
};

// Per trial: one shared noise sequence drives the cost-conditioned (lambda
// = 0), raw-reward and FTR-reward chains; start states are drawn from the
// provided pool. Throws when n_trials < 2.
DriftReport coupled_drift_experiment(const DriftSetup& setup,
                                     const EnvSpec& env,
                                     const std::vector<std::vector<double>>& start_pool,
                                     int n_trials, std::uint64_t seed);

// --- Alignment --------------------------------------------------------------

struct AlignmentTrial {
  std::vector<double> a_s;  // per reverse step, index s-1
  double a_f = 0.0;         // sum over steps
};

struct AlignmentReport {
  std::vector<AlignmentTrial> trials;
  double mean_a_f = 0.0;
  double frac_positive = 0.0;
  std::uint64_t seed = 0;
};

AlignmentReport estimate_alignment(const DriftSetup& setup, const EnvSpec& env,
                                   const std::vector<std::vector<double>>& start_pool,
                                   int n_trials, std::uint64_t seed);

// --- Cost classifier correlation --------------------------------------------

struct CorrelationCurve {
  std::vector<double> r;            // Pearson r per step, index s-1
  std::vector<bool> defined;        // false where variance degenerated
};

CorrelationCurve cost_classifier_correlation(const ScalarModel& cost_model,
                                             const Dataset& ds,
                                             const NoiseSchedule& sched,
                                             std::uint64_t seed);

// Spearman rank correlation between r and s over defined entries.
double spearman_against_step(const CorrelationCurve& curve);

// --- Rollout error -----------------------------------------------------------

using DynamicsFn = std::function<std::vector<double>(
    std::span<const double> state, std::span<const double> action)>;

struct RolloutErrorRow {
  int horizon = 0;
  double autoregressive = 0.0;  // dynamics model vs ground truth
  double joint = 0.0;           // generated state vs env resim of own actions
};

// Dynamics model on (state, action) -> next state, trained on dataset
// transitions.
std::pair<nn::NetSpec, nn::Params> train_dynamics_model(
    const Dataset& ds, const nn::NetSpec& net, const TrainConfig& cfg,
    LossTrace* trace);
DynamicsFn make_dynamics_fn(const nn::NetSpec& spec, const nn::Params& params);

std::vector<RolloutErrorRow> rollout_error_experiment(
    const DynamicsFn& dynamics, const NoiseSchedule& sched,
    const Denoiser& den, const Dataset& ds, std::span<const int> horizons,
    std::uint64_t seed);

// One-sided exact binomial tail P[X >= k], X ~ Bin(n, 1/2).
double binomial_sign_test_p(int k, int n);

}  // namespace sdgd

#endif  // SDGD_DIAGNOSTICS_HPP_
