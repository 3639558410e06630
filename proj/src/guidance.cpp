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

#include "sdgd/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

namespace sdgd {

void GuidanceConfig::validate(int horizon) const {
  if (w < 0.0) throw std::invalid_argument("guidance: w must be >= 0");
  if (lambda < 0.0) throw std::invalid_argument("guidance: lambda must be >= 0");
  if (feasible_len < 1 || feasible_len > horizon) {
    throw std::invalid_argument("guidance: f must be in [1, L]");
  }
  if (r_us >= 0.0) throw std::invalid_argument("guidance: r_us must be negative");
  if (p_uncond < 0.0 || p_uncond > 1.0) {
    throw std::invalid_argument("guidance: p_uncond must be in [0,1]");
  }
}

void cfg_combine(std::span<const double> score_cond,
                 std::span<const double> score_uncond, double w,
                 std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 + w) * score_cond[i] - w * score_uncond[i];
  }
}

void add_scaled(std::span<double> out, std::span<const double> g, double lambda) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += lambda * g[i];
}

double ScalarModel::predict(std::span<const double> x, int s,
                            nn::Workspace& ws) const {
  std::vector<double> in(static_cast<std::size_t>(input_dim()));
  std::copy(x.begin(), x.end(), in.begin());
  step_embedding(s, n_steps, std::span<double>(in).subspan(sample_dim, kStepEmbedDim));
  double out = 0.0;
  nn::forward(net, params, in, std::span<double>(&out, 1), ws);
  return out;
}

void ScalarModel::input_grad(std::span<const double> x, int s,
                             std::span<double> gx, nn::Workspace& ws) const {
  std::vector<double> in(static_cast<std::size_t>(input_dim()));
  std::copy(x.begin(), x.end(), in.begin());
  step_embedding(s, n_steps, std::span<double>(in).subspan(sample_dim, kStepEmbedDim));
  double out = 0.0;
  nn::forward(net, params, in, std::span<double>(&out, 1), ws);
  const double one = 1.0;
  std::vector<double> pg(nn::param_count(net), 0.0);
  std::vector<double> full(in.size(), 0.0);
  nn::backward(net, params, ws, std::span<const double>(&one, 1), pg, full);
  std::copy(full.begin(), full.begin() + sample_dim, gx.begin());
}

std::vector<double> regression_targets(const std::vector<SegmentLabels>& labels,
                                       RewardMode mode) {
  std::vector<double> out;
  out.reserve(labels.size());
  for (const auto& lab : labels) {
    out.push_back(mode == RewardMode::FTR ? lab.r_hat : lab.ret);
  }
  return out;
}

namespace {

// Shared regression loop over q_sample-noised segments with uniform steps.
// Held-out split: every 10th segment (by index) is held out.
ScalarModel train_regressor(const Dataset& ds, const NoiseSchedule& sched,
                            const std::vector<double>& targets,
                            const nn::NetSpec& net, const TrainConfig& cfg,
                            LossTrace* trace, RegressionReport* report,
                            bool per_step_heldout) {
  const auto& segs = ds.segments();
  if (segs.size() != targets.size()) {
    throw std::invalid_argument("guidance: targets/segments size mismatch");
  }
  std::vector<std::size_t> train_idx, held_idx;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (i % 10 == 9) {
      held_idx.push_back(i);
    } else {
      train_idx.push_back(i);
    }
  }
  if (train_idx.empty()) throw std::invalid_argument("guidance: dataset too small");

  std::vector<std::vector<double>> flats(segs.size());
  for (std::size_t i = 0; i < segs.size(); ++i) {
    flats[i] = normalize_flat(ds.stats(), segs[i].flat());
  }
  const int dim = segs[0].flat_dim();

  ScalarModel model;
  model.net = net;
  model.net.input_dim = dim + kStepEmbedDim;
  model.net.output_dim = 1;
  model.net.validate();
  model.sample_dim = dim;
  model.n_steps = sched.n_steps;
  model.params = nn::init_params(model.net, mix_seed(cfg.seed, 0x11));
  nn::AdamState adam(model.params.size(), cfg.lr);
  Rng rng(mix_seed(cfg.seed, 0x12));
  std::vector<double> grads(model.params.size());
  const int in_dim = model.input_dim();
  const int drop_at = cfg.steps - static_cast<int>(cfg.lr_drop_frac * cfg.steps);
  const int avg_from = cfg.steps - static_cast<int>(cfg.polyak_frac * cfg.steps);
  std::vector<double> avg;
  long avg_n = 0;

  std::vector<std::size_t> pick(cfg.batch);
  std::vector<int> steps(cfg.batch);
  std::vector<std::vector<double>> eps(cfg.batch, std::vector<double>(dim));
  for (int step = 1; step <= cfg.steps; ++step) {
    for (int i = 0; i < cfg.batch; ++i) {
      pick[i] = train_idx[rng.uniform_index(train_idx.size())];
      steps[i] = 1 + static_cast<int>(rng.uniform_index(sched.n_steps));
      rng.fill_normal(eps[i]);
    }
    const double loss = nn::accumulate_batch(
        model.net, cfg.batch,
        [&](std::size_t i, nn::Workspace& ws, std::span<double> g) {
          ws.scratch_in.resize(static_cast<std::size_t>(in_dim));
          std::span<double> in(ws.scratch_in);
          q_sample(sched, flats[pick[i]], steps[i], eps[i], in.subspan(0, dim));
          step_embedding(steps[i], sched.n_steps, in.subspan(dim, kStepEmbedDim));
          double out = 0.0;
          nn::forward(model.net, model.params, ws.scratch_in,
                      std::span<double>(&out, 1), ws);
          const double r = out - targets[pick[i]];
          const double up = 2.0 * r;
          nn::backward(model.net, model.params, ws,
                       std::span<const double>(&up, 1), g, {});
          return r * r;
        },
        grads);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("guidance: regression diverged at step " +
                               std::to_string(step));
    }
    if (cfg.cosine_lr_decay) {
      const double prog = static_cast<double>(step) / cfg.steps;
      adam.lr = cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * prog));
    } else {
      adam.lr = step > drop_at ? cfg.lr * 0.1 : cfg.lr;
    }
    nn::adam_step(model.params, adam, grads);
    if (cfg.polyak_frac > 0.0 && step > avg_from) {
      if (avg.empty()) avg.assign(model.params.size(), 0.0);
      ++avg_n;
      for (std::size_t i = 0; i < avg.size(); ++i) {
        avg[i] += (model.params[i] - avg[i]) / static_cast<double>(avg_n);
      }
    }
    if (trace && (step % cfg.log_every == 0 || step == 1)) {
      trace->entries.emplace_back(step, loss);
    }
  }
  if (avg_n > 0) model.params = avg;

  if (report) {
    Rng hrng(mix_seed(cfg.seed, 0x13));
    nn::Workspace ws(model.net);
    std::vector<double> noisy(dim), e(dim);
    double mse = 0.0;
    std::size_t count = 0;
    std::vector<double> per_step_sum(sched.n_steps, 0.0);
    std::vector<std::size_t> per_step_n(sched.n_steps, 0);
    // Sweep every held-out segment over a deterministic spread of steps.
    for (std::size_t i : held_idx) {
      for (int rep = 0; rep < 4; ++rep) {
        const int s = 1 + static_cast<int>(hrng.uniform_index(sched.n_steps));
        hrng.fill_normal(e);
        q_sample(sched, flats[i], s, e, noisy);
        const double r = model.predict(noisy, s, ws) - targets[i];
        mse += r * r;
        ++count;
        if (per_step_heldout) {
          per_step_sum[s - 1] += r * r;
          per_step_n[s - 1] += 1;
        }
      }
    }
    report->heldout_mse = count ? mse / static_cast<double>(count) : 0.0;
    if (per_step_heldout) {
      report->heldout_mse_per_step.assign(sched.n_steps, 0.0);
      for (int s = 0; s < sched.n_steps; ++s) {
        report->heldout_mse_per_step[s] =
            per_step_n[s] ? per_step_sum[s] / static_cast<double>(per_step_n[s]) : 0.0;
      }
    }
  }
  return model;
}

}  // namespace

ScalarModel train_reward_model(const Dataset& ds, const NoiseSchedule& sched,
                               RewardMode mode, const nn::NetSpec& net,
                               const TrainConfig& cfg, LossTrace* trace,
                               RegressionReport* report) {
  return train_reward_model_with_labels(ds, ds.labels(), sched, mode, net, cfg,
                                        trace, report);
}

ScalarModel train_reward_model_with_labels(
    const Dataset& ds, const std::vector<SegmentLabels>& labels,
    const NoiseSchedule& sched, RewardMode mode, const nn::NetSpec& net,
    const TrainConfig& cfg, LossTrace* trace, RegressionReport* report) {
  const std::vector<double> targets = regression_targets(labels, mode);
  ScalarModel m = train_regressor(ds, sched, targets, net, cfg, trace, report,
                                  /*per_step_heldout=*/false);
  m.target = mode == RewardMode::FTR ? "r_hat" : "r_raw";
  m.feasible_len = ds.feasible_len();
  m.r_us = mode == RewardMode::FTR ? ds.r_us() : 0.0;
  return m;
}

ScalarModel train_cost_model(const Dataset& ds, const NoiseSchedule& sched,
                             const nn::NetSpec& net, const TrainConfig& cfg,
                             LossTrace* trace, RegressionReport* report) {
  std::vector<double> targets;
  targets.reserve(ds.labels().size());
  for (const auto& lab : ds.labels()) targets.push_back(lab.cost);
  ScalarModel m = train_regressor(ds, sched, targets, net, cfg, trace, report,
                                  /*per_step_heldout=*/true);
  m.target = "cost";
  m.feasible_len = ds.feasible_len();
  m.r_us = 0.0;
  return m;
}

void save_scalar_model(const std::filesystem::path& path, const ScalarModel& m) {
  nn::save_params(path, m.net, m.params);
  nlohmann::json j{{"sample_dim", m.sample_dim},
                   {"n_steps", m.n_steps},
                   {"target", m.target},
                   {"feasible_len", m.feasible_len},
                   {"r_us", m.r_us}};
  std::ofstream f(path.string() + ".json");
  if (!f) throw std::runtime_error("guidance: cannot write sidecar for " + path.string());
  f << j.dump(2) << "\n";
}

ScalarModel load_scalar_model(const std::filesystem::path& path) {
  ScalarModel m;
  auto [spec, params] = nn::load_params(path);
  m.net = spec;
  m.params = std::move(params);
  std::ifstream f(path.string() + ".json");
  if (!f) throw std::runtime_error("guidance: missing sidecar for " + path.string());
  nlohmann::json j = nlohmann::json::parse(f);
  m.sample_dim = j.at("sample_dim").get<int>();
  m.n_steps = j.at("n_steps").get<int>();
  m.target = j.at("target").get<std::string>();
  m.feasible_len = j.at("feasible_len").get<int>();
  m.r_us = j.at("r_us").get<double>();
  if (m.net.input_dim != m.input_dim() || m.net.output_dim != 1) {
    throw std::runtime_error("guidance: checkpoint spec/sidecar mismatch");
  }
  return m;
}

void cfg_score(const NoiseSchedule& sched, const Denoiser& den,
               std::span<const double> x, int s, double limit_norm, double w,
               std::span<double> out) {
  nn::Workspace ws(den.net);
  std::vector<double> eps_c(den.sample_dim), eps_u(den.sample_dim);
  den.predict_eps(x, s, limit_norm, eps_c, ws);
  den.predict_eps(x, s, std::nullopt, eps_u, ws);
  std::vector<double> sc(den.sample_dim), su(den.sample_dim);
  eps_to_score(sched, eps_c, s, sc);
  eps_to_score(sched, eps_u, s, su);
  cfg_combine(sc, su, w, out);
}

void reward_gradient(const ScalarModel& model, std::span<const double> x, int s,
                     std::span<double> out) {
  nn::Workspace ws(model.net);
  model.input_grad(x, s, out, ws);
}

void sdgd_score(const NoiseSchedule& sched, const Denoiser& den,
                const ScalarModel& reward, std::span<const double> x, int s,
                double limit_norm, const GuidanceConfig& cfg,
                std::span<double> out) {
  cfg_score(sched, den, x, s, limit_norm, cfg.w, out);
  std::vector<double> g(den.sample_dim);
  reward_gradient(reward, x, s, g);
  add_scaled(out, g, cfg.lambda);
}

void sdgd_adjustment(const NoiseSchedule& sched, const Denoiser& den,
                     const ScalarModel* reward, std::span<const double> x,
                     int s, std::optional<double> limit_norm, double w,
                     double lambda, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  if (w != 0.0) {
    if (!limit_norm.has_value()) {
      throw std::invalid_argument("guidance: CFG adjustment needs a limit");
    }
    nn::Workspace ws(den.net);
    std::vector<double> eps_c(den.sample_dim), eps_u(den.sample_dim);
    den.predict_eps(x, s, limit_norm, eps_c, ws);
    den.predict_eps(x, s, std::nullopt, eps_u, ws);
    std::vector<double> sc(den.sample_dim), su(den.sample_dim);
    eps_to_score(sched, eps_c, s, sc);
    eps_to_score(sched, eps_u, s, su);
    // w * (score_cond - score_uncond): the excess of Eq.-7 CFG over the
    // plain conditional score.
    for (int i = 0; i < den.sample_dim; ++i) out[i] = w * (sc[i] - su[i]);
  }
  if (reward != nullptr && lambda != 0.0) {
    std::vector<double> g(den.sample_dim);
    reward_gradient(*reward, x, s, g);
    add_scaled(out, g, lambda);
  }
}

double cost_hinge(const ScalarModel& cost, std::span<const double> x, int s,
                  double limit_raw, std::span<double> grad_out,
                  nn::Workspace& ws) {
  const double c = cost.predict(x, s, ws);
  if (c <= limit_raw) {
    std::fill(grad_out.begin(), grad_out.end(), 0.0);
    return 0.0;
  }
  cost.input_grad(x, s, grad_out, ws);
  return c - limit_raw;
}

void swapped_score(const NoiseSchedule& sched, const Denoiser& den_ret,
                   const ScalarModel& cost, std::span<const double> x, int s,
                   double target_return_norm, double limit_raw,
                   const GuidanceConfig& cfg, std::span<double> out) {
  cfg_score(sched, den_ret, x, s, target_return_norm, cfg.w, out);
  nn::Workspace ws(cost.net);
  std::vector<double> g(cost.sample_dim);
  cost_hinge(cost, x, s, limit_raw, g, ws);
  add_scaled(out, g, -cfg.lambda);
}

}  // namespace sdgd
