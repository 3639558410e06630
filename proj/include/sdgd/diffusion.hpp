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

#ifndef SDGD_DIFFUSION_HPP_
#define SDGD_DIFFUSION_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdgd/approx.hpp"
#include "sdgd/rng.hpp"

namespace sdgd {

// DDPM machinery: linear-beta schedule, epsilon-prediction training with a
// cost-limit condition channel and a null token, and ancestral reverse
// sampling with an additive score hook and state inpainting.

struct NoiseSchedule {
  int n_steps = 0;
  std::vector<double> beta;       // beta[s-1], linear 1e-4 .. 0.02
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // running product
  std::vector<double> sigma2;     // posterior variance, sigma2[0] = beta[0]

  double alpha_bar_at(int s) const;  // s in [0, N]; alpha_bar_at(0) = 1
};

NoiseSchedule make_schedule(int n_steps);

// x_s = sqrt(abar_s) x0 + sqrt(1-abar_s) eps. s = 0 returns x0.
void q_sample(const NoiseSchedule& sched, std::span<const double> x0, int s,
              std::span<const double> eps, std::span<double> out);

// score = -eps / sqrt(1 - abar_s), and back.
void eps_to_score(const NoiseSchedule& sched, std::span<const double> eps,
                  int s, std::span<double> score);
void score_to_eps(const NoiseSchedule& sched, std::span<const double> score,
                  int s, std::span<double> eps);

inline constexpr int kStepEmbedDim = 16;
inline constexpr int kCondEmbedDim = 2;

// Sinusoidal features of s/N; frequencies log-spaced in [1, 64], low enough
// that the features vary smoothly across neighboring steps.
void step_embedding(int s, int n_steps, std::span<double> out);
// [limit, 1] for a limit normalized to [0,1]; [0, 0] for the null token.
void cond_embedding(std::optional<double> limit_norm, std::span<double> out);

// Additive score adjustment evaluated on the noisy sample.
using GuidanceHook =
    std::function<void(std::span<const double> x, int s, std::span<double> g)>;

// Epsilon predictor abstraction; the oracle tests substitute analytic
// functions for the network through this seam.
using EpsFn = std::function<void(std::span<const double> x, int s,
                                 std::optional<double> cond,
                                 std::span<double> eps_out)>;

struct Denoiser {
  nn::NetSpec net;         // input_dim = sample_dim + 16 + 2
  nn::Params params;
  int sample_dim = 0;      // D = L * (state_dim + action_dim)
  int n_steps = 0;
  // Expanded per-coordinate normalization (empty = identity); samples are
  // produced in normalized space and decoded through these.
  std::vector<double> norm_mean, norm_std;
  // Metadata carried into the checkpoint sidecar.
  std::string env_id;
  std::string cond_kind = "cost_limit";  // or "return"
  int horizon = 0, state_dim = 0, action_dim = 0;

  int input_dim() const { return sample_dim + kStepEmbedDim + kCondEmbedDim; }
  void predict_eps(std::span<const double> x, int s, std::optional<double> cond,
                   std::span<double> eps_out, nn::Workspace& ws) const;
  EpsFn as_eps_fn() const;
};

struct TrainConfig {
  int steps = 30000;
  int batch = 128;
  double lr = 3e-4;
  double p_uncond = 0.25;
  std::uint64_t seed = 0;
  int log_every = 100;
  bool cosine_lr_decay = false;   // decay to ~0 over the run when set
  double lr_drop_frac = 0.0;      // final fraction of steps run at lr/10
  double polyak_frac = 0.0;       // average params over this tail fraction
};

struct LossTrace {
  std::vector<std::pair<int, double>> entries;  // (step, batch loss)
};

// One training batch: normalized flat samples plus per-sample conditions
// (nullopt = null token). Conditions are already normalized to [0,1].
struct TrainBatch {
  std::vector<std::vector<double>> x0;
  std::vector<std::optional<double>> cond;
};
using BatchSampler = std::function<TrainBatch(int batch_size, Rng& rng)>;

// Mean over the batch of |eps - eps_theta(q_sample(x0,s,eps), s, cond)|^2
// with s uniform on {1..N} and eps standard normal. Per-sample draw order
// from rng: s first, then the eps vector. Returns the loss; grads receives
// the mean parameter gradient.
double denoising_loss(const Denoiser& den, const NoiseSchedule& sched,
                      const TrainBatch& batch, Rng& rng,
                      std::span<double> grads);

// Adam training loop over sampler batches. Throws on NaN loss.
Denoiser train_denoiser(const BatchSampler& sampler, const nn::NetSpec& net,
                        int sample_dim, const NoiseSchedule& sched,
                        const TrainConfig& cfg, LossTrace* trace);

struct SampleRequest {
  std::optional<double> cond;  // normalized limit, nullopt = null token
  GuidanceHook hook;           // may be empty
  std::vector<int> inpaint_idx;         // flat coordinates to pin
  std::vector<double> inpaint_vals;     // normalized pinned values
  std::uint64_t seed = 0;
  // Optional coupled-noise injection: [0] is the initial draw, [s] the step-s
  // noise for s in 1..N ([1] is ignored, the terminal step adds no noise).
  const std::vector<std::vector<double>>* injected_noise = nullptr;
};

// One reverse step s -> s-1: eps_hat = eps_theta - sqrt(1-abar_s) * g, then
// the DDPM mean update plus sigma_s * noise (noise must be zero at s = 1).
// Pinned coordinates are overwritten with q_sample of the pinned values at
// step s-1, reusing the same noise vector.
void ancestral_step(const NoiseSchedule& sched, const EpsFn& eps_fn,
                    std::vector<double>& x, int s,
                    std::optional<double> cond, const GuidanceHook& hook,
                    std::span<const double> noise,
                    std::span<const int> inpaint_idx,
                    std::span<const double> inpaint_vals);

// Full reverse chain in normalized space.
std::vector<double> sample_normalized(const NoiseSchedule& sched,
                                      const EpsFn& eps_fn, int dim,
                                      const SampleRequest& req);

// Denoiser-backed chain; output decoded through the denoiser normalizer.
std::vector<double> sample(const NoiseSchedule& sched, const Denoiser& den,
                           const SampleRequest& req);

// Independent chains, parallel across requests.
std::vector<std::vector<double>> sample_many(
    const NoiseSchedule& sched, const Denoiser& den,
    const std::vector<SampleRequest>& reqs);

// x0_hat = (x_s - sqrt(1-abar_s) eps) / sqrt(abar_s).
void predict_x0(const NoiseSchedule& sched, std::span<const double> x, int s,
                std::span<const double> eps, std::span<double> x0_out);

// Checkpoint = params file plus a JSON sidecar at path + ".json".
void save_denoiser(const std::filesystem::path& path, const Denoiser& den);
Denoiser load_denoiser(const std::filesystem::path& path);

}  // namespace sdgd

#endif  // SDGD_DIFFUSION_HPP_
