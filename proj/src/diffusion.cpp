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

#include "sdgd/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "sdgd/parallel.hpp"

namespace sdgd {

namespace {
constexpr double kBetaStart = 1e-4;
constexpr double kBetaEnd = 0.02;

void check_step(const NoiseSchedule& sched, int s) {
  if (s < 1 || s > sched.n_steps) {
    throw std::invalid_argument("diffusion: step out of range");
  }
}
}  // namespace

NoiseSchedule make_schedule(int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("diffusion: need at least one step");
  NoiseSchedule sched;
  sched.n_steps = n_steps;
  sched.beta.resize(n_steps);
  sched.alpha.resize(n_steps);
  sched.alpha_bar.resize(n_steps);
  sched.sigma2.resize(n_steps);
  double prod = 1.0;
  for (int s = 1; s <= n_steps; ++s) {
    const double frac = n_steps == 1 ? 0.0
                                     : static_cast<double>(s - 1) /
                                           static_cast<double>(n_steps - 1);
    const double beta = kBetaStart + (kBetaEnd - kBetaStart) * frac;
    const double abar_prev = prod;
    prod *= 1.0 - beta;
    sched.beta[s - 1] = beta;
    sched.alpha[s - 1] = 1.0 - beta;
    sched.alpha_bar[s - 1] = prod;
    sched.sigma2[s - 1] =
        s == 1 ? beta : beta * (1.0 - abar_prev) / (1.0 - prod);
  }
  return sched;
}

double NoiseSchedule::alpha_bar_at(int s) const {
  if (s < 0 || s > n_steps) throw std::invalid_argument("diffusion: step out of range");
  return s == 0 ? 1.0 : alpha_bar[s - 1];
}

void q_sample(const NoiseSchedule& sched, std::span<const double> x0, int s,
              std::span<const double> eps, std::span<double> out) {
  if (s == 0) {
    std::copy(x0.begin(), x0.end(), out.begin());
    return;
  }
  check_step(sched, s);
  const double a = std::sqrt(sched.alpha_bar_at(s));
  const double b = std::sqrt(1.0 - sched.alpha_bar_at(s));
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
}

void eps_to_score(const NoiseSchedule& sched, std::span<const double> eps,
                  int s, std::span<double> score) {
  check_step(sched, s);
  const double c = -1.0 / std::sqrt(1.0 - sched.alpha_bar_at(s));
  for (std::size_t i = 0; i < eps.size(); ++i) score[i] = c * eps[i];
}

void score_to_eps(const NoiseSchedule& sched, std::span<const double> score,
                  int s, std::span<double> eps) {
  check_step(sched, s);
  const double c = -std::sqrt(1.0 - sched.alpha_bar_at(s));
  for (std::size_t i = 0; i < score.size(); ++i) eps[i] = c * score[i];
}

void step_embedding(int s, int n_steps, std::span<double> out) {
  if (static_cast<int>(out.size()) != kStepEmbedDim) {
    throw std::invalid_argument("diffusion: step embedding size");
  }
  const double u = static_cast<double>(s) / static_cast<double>(n_steps);
  const int half = kStepEmbedDim / 2;
  for (int k = 0; k < half; ++k) {
    const double freq =
        std::pow(64.0, static_cast<double>(k) / static_cast<double>(half - 1));
    out[2 * k] = std::sin(freq * u);
    out[2 * k + 1] = std::cos(freq * u);
  }
}

void cond_embedding(std::optional<double> limit_norm, std::span<double> out) {
  if (static_cast<int>(out.size()) != kCondEmbedDim) {
    throw std::invalid_argument("diffusion: cond embedding size");
  }
  if (limit_norm.has_value()) {
    out[0] = std::clamp(*limit_norm, 0.0, 1.0);
    out[1] = 1.0;  // flag channel keeps every limit distinguishable from null
  } else {
    out[0] = 0.0;
    out[1] = 0.0;
  }
}

void Denoiser::predict_eps(std::span<const double> x, int s,
                           std::optional<double> cond, std::span<double> eps_out,
                           nn::Workspace& ws) const {
  std::vector<double> in(static_cast<std::size_t>(input_dim()));
  std::copy(x.begin(), x.end(), in.begin());
  step_embedding(s, n_steps, std::span<double>(in).subspan(sample_dim, kStepEmbedDim));
  cond_embedding(cond, std::span<double>(in).subspan(sample_dim + kStepEmbedDim,
                                                     kCondEmbedDim));
  nn::forward(net, params, in, eps_out, ws);
}

EpsFn Denoiser::as_eps_fn() const {
  auto ws = std::make_shared<nn::Workspace>(net);
  return [this, ws](std::span<const double> x, int s, std::optional<double> cond,
                    std::span<double> eps_out) {
    predict_eps(x, s, cond, eps_out, *ws);
  };
}

double denoising_loss(const Denoiser& den, const NoiseSchedule& sched,
                      const TrainBatch& batch, Rng& rng,
                      std::span<double> grads) {
  const std::size_t n = batch.x0.size();
  const int dim = den.sample_dim;
  // Draws happen serially up front so chunked parallel execution never
  // touches the RNG stream.
  std::vector<int> steps(n);
  std::vector<std::vector<double>> eps(n);
  for (std::size_t i = 0; i < n; ++i) {
    steps[i] = 1 + static_cast<int>(rng.uniform_index(sched.n_steps));
    eps[i].resize(dim);
    rng.fill_normal(eps[i]);
  }
  const int in_dim = den.input_dim();
  return nn::accumulate_batch(
      den.net, n,
      [&](std::size_t i, nn::Workspace& ws, std::span<double> g) {
        ws.scratch_in.resize(static_cast<std::size_t>(in_dim));
        ws.scratch_out.resize(dim);
        ws.scratch_up.resize(dim);
        std::span<double> in(ws.scratch_in);
        q_sample(sched, batch.x0[i], steps[i], eps[i], in.subspan(0, dim));
        step_embedding(steps[i], sched.n_steps, in.subspan(dim, kStepEmbedDim));
        cond_embedding(batch.cond[i],
                       in.subspan(dim + kStepEmbedDim, kCondEmbedDim));
        nn::forward(den.net, den.params, ws.scratch_in, ws.scratch_out, ws);
        double loss = 0.0;
        for (int d = 0; d < dim; ++d) {
          const double r = ws.scratch_out[d] - eps[i][d];
          loss += r * r;
          ws.scratch_up[d] = 2.0 * r;
        }
        nn::backward(den.net, den.params, ws, ws.scratch_up, g, {});
        return loss;
      },
      grads);
}

Denoiser train_denoiser(const BatchSampler& sampler, const nn::NetSpec& net,
                        int sample_dim, const NoiseSchedule& sched,
                        const TrainConfig& cfg, LossTrace* trace) {
  Denoiser den;
  den.net = net;
  den.net.input_dim = sample_dim + kStepEmbedDim + kCondEmbedDim;
  den.net.output_dim = sample_dim;
  den.net.validate();
  den.sample_dim = sample_dim;
  den.n_steps = sched.n_steps;
  den.params = nn::init_params(den.net, mix_seed(cfg.seed, 0x1));
  nn::AdamState adam(den.params.size(), cfg.lr);
  Rng rng(mix_seed(cfg.seed, 0x2));
  std::vector<double> grads(den.params.size());
  const int drop_at = cfg.steps - static_cast<int>(cfg.lr_drop_frac * cfg.steps);
  const int avg_from = cfg.steps - static_cast<int>(cfg.polyak_frac * cfg.steps);
  std::vector<double> avg;
  long avg_n = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    TrainBatch batch = sampler(cfg.batch, rng);
    const double loss = denoising_loss(den, sched, batch, rng, grads);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("diffusion: training diverged (loss not finite) at step " +
                               std::to_string(step));
    }
    if (cfg.cosine_lr_decay) {
      const double prog = static_cast<double>(step) / cfg.steps;
      adam.lr = cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * prog));
    } else {
      adam.lr = step > drop_at ? cfg.lr * 0.1 : cfg.lr;
    }
    nn::adam_step(den.params, adam, grads);
    if (cfg.polyak_frac > 0.0 && step > avg_from) {
      if (avg.empty()) avg.assign(den.params.size(), 0.0);
      ++avg_n;
      for (std::size_t i = 0; i < avg.size(); ++i) {
        avg[i] += (den.params[i] - avg[i]) / static_cast<double>(avg_n);
      }
    }
    if (trace && (step % cfg.log_every == 0 || step == 1)) {
      trace->entries.emplace_back(step, loss);
    }
  }
  if (avg_n > 0) den.params = avg;
  return den;
}

void ancestral_step(const NoiseSchedule& sched, const EpsFn& eps_fn,
                    std::vector<double>& x, int s,
                    std::optional<double> cond, const GuidanceHook& hook,
                    std::span<const double> noise,
                    std::span<const int> inpaint_idx,
                    std::span<const double> inpaint_vals) {
  check_step(sched, s);
  const int dim = static_cast<int>(x.size());
  std::vector<double> eps_hat(dim);
  eps_fn(x, s, cond, eps_hat);
  if (hook) {
    std::vector<double> g(dim, 0.0);
    hook(x, s, g);
    const double c = std::sqrt(1.0 - sched.alpha_bar_at(s));
    for (int i = 0; i < dim; ++i) eps_hat[i] -= c * g[i];
  }
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha[s - 1]);
  const double coef = sched.beta[s - 1] / std::sqrt(1.0 - sched.alpha_bar_at(s));
  const double sigma = s == 1 ? 0.0 : std::sqrt(sched.sigma2[s - 1]);
  for (int i = 0; i < dim; ++i) {
    x[i] = inv_sqrt_alpha * (x[i] - coef * eps_hat[i]) + sigma * noise[i];
  }
  // Re-pin known coordinates at the new noise level.
  const double a = std::sqrt(sched.alpha_bar_at(s - 1));
  const double b = std::sqrt(1.0 - sched.alpha_bar_at(s - 1));
  const double bn = s == 1 ? 0.0 : b;
  for (std::size_t k = 0; k < inpaint_idx.size(); ++k) {
    const int i = inpaint_idx[k];
    x[i] = a * inpaint_vals[k] + bn * noise[i];
  }
}

std::vector<double> sample_normalized(const NoiseSchedule& sched,
                                      const EpsFn& eps_fn, int dim,
                                      const SampleRequest& req) {
  for (int i : req.inpaint_idx) {
    if (i < 0 || i >= dim) throw std::invalid_argument("diffusion: inpaint index out of range");
  }
  if (req.inpaint_idx.size() != req.inpaint_vals.size()) {
    throw std::invalid_argument("diffusion: inpaint index/value size mismatch");
  }
  const int N = sched.n_steps;
  if (req.injected_noise &&
      static_cast<int>(req.injected_noise->size()) != N + 1) {
    throw std::invalid_argument("diffusion: injected noise needs N+1 vectors");
  }
  Rng rng(req.seed);
  std::vector<double> x(dim);
  std::vector<double> noise(dim, 0.0);
  if (req.injected_noise) {
    x = (*req.injected_noise)[0];
  } else {
    rng.fill_normal(x);
  }
  {  // pin at initialization using the initial draw itself
    const double a = std::sqrt(sched.alpha_bar_at(N));
    const double b = std::sqrt(1.0 - sched.alpha_bar_at(N));
    for (std::size_t k = 0; k < req.inpaint_idx.size(); ++k) {
      const int i = req.inpaint_idx[k];
      x[i] = a * req.inpaint_vals[k] + b * x[i];
    }
  }
  for (int s = N; s >= 1; --s) {
    if (s == 1) {
      std::fill(noise.begin(), noise.end(), 0.0);
    } else if (req.injected_noise) {
      noise = (*req.injected_noise)[s];
    } else {
      rng.fill_normal(noise);
    }
    ancestral_step(sched, eps_fn, x, s, req.cond, req.hook, noise,
                   req.inpaint_idx, req.inpaint_vals);
  }
  return x;
}

std::vector<double> sample(const NoiseSchedule& sched, const Denoiser& den,
                           const SampleRequest& req) {
  nn::Workspace ws(den.net);
  EpsFn fn = [&](std::span<const double> x, int s, std::optional<double> cond,
                 std::span<double> out) { den.predict_eps(x, s, cond, out, ws); };
  std::vector<double> x = sample_normalized(sched, fn, den.sample_dim, req);
  if (!den.norm_mean.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = x[i] * den.norm_std[i] + den.norm_mean[i];
    }
  }
  return x;
}

std::vector<std::vector<double>> sample_many(
    const NoiseSchedule& sched, const Denoiser& den,
    const std::vector<SampleRequest>& reqs) {
  std::vector<std::vector<double>> out(reqs.size());
  par::parallel_for(static_cast<std::int64_t>(reqs.size()), [&](std::int64_t i) {
    out[i] = sample(sched, den, reqs[i]);
  });
  return out;
}

void predict_x0(const NoiseSchedule& sched, std::span<const double> x, int s,
                std::span<const double> eps, std::span<double> x0_out) {
  check_step(sched, s);
  const double a = std::sqrt(sched.alpha_bar_at(s));
  const double b = std::sqrt(1.0 - sched.alpha_bar_at(s));
  for (std::size_t i = 0; i < x.size(); ++i) x0_out[i] = (x[i] - b * eps[i]) / a;
}

void save_denoiser(const std::filesystem::path& path, const Denoiser& den) {
  nn::save_params(path, den.net, den.params);
  nlohmann::json j{{"sample_dim", den.sample_dim},
                   {"n_steps", den.n_steps},
                   {"norm_mean", den.norm_mean},
                   {"norm_std", den.norm_std},
                   {"env_id", den.env_id},
                   {"cond_kind", den.cond_kind},
                   {"horizon", den.horizon},
                   {"state_dim", den.state_dim},
                   {"action_dim", den.action_dim}};
  std::ofstream f(path.string() + ".json");
  if (!f) throw std::runtime_error("diffusion: cannot write sidecar for " + path.string());
  f << j.dump(2) << "\n";
}

Denoiser load_denoiser(const std::filesystem::path& path) {
  Denoiser den;
  auto [spec, params] = nn::load_params(path);
  den.net = spec;
  den.params = std::move(params);
  std::ifstream f(path.string() + ".json");
  if (!f) throw std::runtime_error("diffusion: missing sidecar for " + path.string());
  nlohmann::json j = nlohmann::json::parse(f);
  den.sample_dim = j.at("sample_dim").get<int>();
  den.n_steps = j.at("n_steps").get<int>();
  den.norm_mean = j.at("norm_mean").get<std::vector<double>>();
  den.norm_std = j.at("norm_std").get<std::vector<double>>();
  den.env_id = j.at("env_id").get<std::string>();
  den.cond_kind = j.at("cond_kind").get<std::string>();
  den.horizon = j.at("horizon").get<int>();
  den.state_dim = j.at("state_dim").get<int>();
  den.action_dim = j.at("action_dim").get<int>();
  if (den.net.input_dim != den.input_dim() ||
      den.net.output_dim != den.sample_dim) {
    throw std::runtime_error("diffusion: checkpoint spec/sidecar mismatch");
  }
  return den;
}

}  // namespace sdgd
