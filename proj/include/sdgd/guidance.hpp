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

#ifndef SDGD_GUIDANCE_HPP_
#define SDGD_GUIDANCE_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdgd/dataset.hpp"
#include "sdgd/diffusion.hpp"

namespace sdgd {

// Score composition for decoupled guidance: classifier-free guidance over
// cost limits, a reward model trained on relabeled targets whose input
// gradient refines samples, a diagnostic cost model, and the swapped-role
// baseline.

struct GuidanceConfig {
  double w = 4.0;        // CFG weight
  double lambda = 0.04;  // reward guidance scale
  int feasible_len = 8;  // f, executable prefix length
  double r_us = -1.0;    // relabeling penalty, must be negative
  double p_uncond = 0.25;

  void validate(int horizon) const;  // throws naming the offending field
};

// --- Pure composition algebra ---------------------------------------------

// s_safe = (1+w) * cond - w * uncond, elementwise.
void cfg_combine(std::span<const double> score_cond,
                 std::span<const double> score_uncond, double w,
                 std::span<double> out);

// out += lambda * g.
void add_scaled(std::span<double> out, std::span<const double> g, double lambda);

// --- Scalar predictors ------------------------------------------------------

enum class RewardMode { FTR, Raw };

// Regressor on [noisy flat segment, step embedding] -> scalar. Targets are
// the raw labels (R_hat, R, or C); no target rescaling is applied.
struct ScalarModel {
  nn::NetSpec net;  // input_dim = sample_dim + 16, output_dim = 1
  nn::Params params;
  int sample_dim = 0;
  int n_steps = 0;
  std::string target;  // "r_hat", "r_raw", "cost", for the sidecar
  int feasible_len = 0;
  double r_us = 0.0;

  int input_dim() const { return sample_dim + kStepEmbedDim; }
  double predict(std::span<const double> x, int s, nn::Workspace& ws) const;
  // Gradient of the scalar output w.r.t. the flat segment (upstream = 1).
  void input_grad(std::span<const double> x, int s, std::span<double> gx,
                  nn::Workspace& ws) const;
};

// The regression targets a reward-model training run consumes; FTR mode
// returns the dataset's R_hat labels exactly.
std::vector<double> regression_targets(const std::vector<SegmentLabels>& labels,
                                       RewardMode mode);

struct RegressionReport {
  double heldout_mse = 0.0;
  std::vector<double> heldout_mse_per_step;  // cost model only
};

ScalarModel train_reward_model(const Dataset& ds, const NoiseSchedule& sched,
                               RewardMode mode, const nn::NetSpec& net,
                               const TrainConfig& cfg, LossTrace* trace,
                               RegressionReport* report);
// As train_reward_model but against a caller-supplied label set (f sweep).
ScalarModel train_reward_model_with_labels(
    const Dataset& ds, const std::vector<SegmentLabels>& labels,
    const NoiseSchedule& sched, RewardMode mode, const nn::NetSpec& net,
    const TrainConfig& cfg, LossTrace* trace, RegressionReport* report);

ScalarModel train_cost_model(const Dataset& ds, const NoiseSchedule& sched,
                             const nn::NetSpec& net, const TrainConfig& cfg,
                             LossTrace* trace, RegressionReport* report);

void save_scalar_model(const std::filesystem::path& path, const ScalarModel& m);
ScalarModel load_scalar_model(const std::filesystem::path& path);

// --- Model-backed scores ----------------------------------------------------

// (1+w) * score(cond=l) - w * score(cond=null), scores via eps_to_score.
void cfg_score(const NoiseSchedule& sched, const Denoiser& den,
               std::span<const double> x, int s, double limit_norm, double w,
               std::span<double> out);

void reward_gradient(const ScalarModel& model, std::span<const double> x, int s,
                     std::span<double> out);

// cfg_score + lambda * reward_gradient.
void sdgd_score(const NoiseSchedule& sched, const Denoiser& den,
                const ScalarModel& reward, std::span<const double> x, int s,
                double limit_norm, const GuidanceConfig& cfg,
                std::span<double> out);

// Additive adjustment beyond the plain conditional score:
// w * (score_cond - score_uncond) + lambda * reward_gradient. Equals
// sdgd_score minus the conditional score, exactly.
void sdgd_adjustment(const NoiseSchedule& sched, const Denoiser& den,
                     const ScalarModel* reward, std::span<const double> x,
                     int s, std::optional<double> limit_norm, double w,
                     double lambda, std::span<double> out);

// Swapped-role baseline: CFG on a return condition, classifier gradient on
// the cost hinge max(0, C_psi - l), pushed below the limit.
void swapped_score(const NoiseSchedule& sched, const Denoiser& den_ret,
                   const ScalarModel& cost, std::span<const double> x, int s,
                   double target_return_norm, double limit_raw,
                   const GuidanceConfig& cfg, std::span<double> out);

// Hinge value/gradient helper (shared with its finite-difference test).
double cost_hinge(const ScalarModel& cost, std::span<const double> x, int s,
                  double limit_raw, std::span<double> grad_out,
                  nn::Workspace& ws);

}  // namespace sdgd

#endif  // SDGD_GUIDANCE_HPP_
