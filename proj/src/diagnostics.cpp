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

#include "sdgd/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sdgd/parallel.hpp"

namespace sdgd {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<double> decode_state(const DatasetStats& stats,
                                 std::span<const double> flat_norm, int t) {
  const int row = stats.state_dim + stats.action_dim;
  std::vector<double> s(stats.state_dim);
  for (int j = 0; j < stats.state_dim; ++j) {
    s[j] = flat_norm[static_cast<std::size_t>(t) * row + j] * stats.stdev[j] +
           stats.mean[j];
  }
  return s;
}

// States decoded from generated segments may fall slightly outside the env
// domain; clamp before querying the surrogate, with zero gradient past the
// boundary (the clamp is flat there).
std::vector<double> clamp_state(const EnvSpec& env, std::vector<double> s,
                                std::vector<bool>* clamped) {
  clamped->assign(s.size(), false);
  if (env.id == EnvId::PointHazard2D) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      const double c = std::clamp(s[j], -1.0, 1.0);
      if (c != s[j]) (*clamped)[j] = true;
      s[j] = c;
    }
  } else {
    const double c = std::clamp(s[0], 0.0, 1.0);
    if (c != s[0]) (*clamped)[0] = true;
    s[0] = c;
  }
  return s;
}

}  // namespace

double surrogate_cost(const EnvSpec& env, const DatasetStats& stats,
                      std::span<const double> flat_norm,
                      std::span<double> grad_out) {
  const int row = stats.state_dim + stats.action_dim;
  std::fill(grad_out.begin(), grad_out.end(), 0.0);
  double total = 0.0;
  std::vector<bool> clamped;
  for (int t = 0; t < stats.horizon; ++t) {
    auto s = clamp_state(env, decode_state(stats, flat_norm, t), &clamped);
    total += smooth_cost(env, s);
    const auto g = smooth_cost_grad(env, s);
    for (int j = 0; j < stats.state_dim; ++j) {
      if (clamped[j]) continue;
      grad_out[static_cast<std::size_t>(t) * row + j] = g[j] * stats.stdev[j];
    }
  }
  return total;
}

double surrogate_prefix_infeasibility(const EnvSpec& env,
                                      const DatasetStats& stats,
                                      std::span<const double> flat_norm,
                                      int feasible_len,
                                      std::span<double> grad_out) {
  const int row = stats.state_dim + stats.action_dim;
  std::fill(grad_out.begin(), grad_out.end(), 0.0);
  double prefix = 0.0;
  std::vector<bool> clamped;
  std::vector<std::vector<double>> step_grads(feasible_len);
  std::vector<std::vector<bool>> step_clamped(feasible_len);
  for (int t = 0; t < feasible_len; ++t) {
    auto s = clamp_state(env, decode_state(stats, flat_norm, t), &clamped);
    prefix += smooth_cost(env, s);
    step_grads[t] = smooth_cost_grad(env, s);
    step_clamped[t] = clamped;
  }
  const double z = 10.0 * prefix - 5.0;
  const double h = sigmoid(z);
  const double dh = h * (1.0 - h) * 10.0;
  for (int t = 0; t < feasible_len; ++t) {
    for (int j = 0; j < stats.state_dim; ++j) {
      if (step_clamped[t][j]) continue;
      grad_out[static_cast<std::size_t>(t) * row + j] =
          dh * step_grads[t][j] * stats.stdev[j];
    }
  }
  return h;
}

double resimulated_cost(const EnvSpec& env, std::span<const double> start,
                        std::span<const double> flat_plan, int horizon) {
  const int row = env.state_dim + env.action_dim;
  std::vector<double> state(start.begin(), start.end());
  double cost = 0.0;
  for (int t = 0; t < horizon; ++t) {
    std::vector<double> action(env.action_dim);
    for (int j = 0; j < env.action_dim; ++j) {
      const double a = flat_plan[static_cast<std::size_t>(t) * row + env.state_dim + j];
      action[j] = std::clamp(a, -env.action_bound, env.action_bound);
    }
    StepResult r = step(env, state, action);
    cost += r.cost;
    state = r.next_state;
  }
  return cost;
}

double binomial_sign_test_p(int k, int n) {
  if (n <= 0) return 1.0;
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  double p = 0.0;
  const double log_half_n = -static_cast<double>(n) * std::log(2.0);
  for (int j = k; j <= n; ++j) {
    const double logc = std::lgamma(n + 1.0) - std::lgamma(j + 1.0) -
                        std::lgamma(n - j + 1.0);
    p += std::exp(logc + log_half_n);
  }
  return std::min(p, 1.0);
}

DriftReport coupled_drift_experiment(const DriftSetup& setup,
                                     const EnvSpec& env,
                                     const std::vector<std::vector<double>>& start_pool,
                                     int n_trials, std::uint64_t seed) {
  if (n_trials < 2) throw std::invalid_argument("diagnostics: need at least 2 trials");
  if (start_pool.empty()) throw std::invalid_argument("diagnostics: empty start pool");
  const Denoiser& den = *setup.denoiser;
  const NoiseSchedule& sched = *setup.schedule;
  const int dim = den.sample_dim;
  const double scale = setup.c_max_seg > 0.0 ? setup.c_max_seg : 1.0;
  const double cond = std::clamp(setup.limit / scale, 0.0, 1.0);

  DriftReport report;
  report.seed = seed;
  report.trials.resize(n_trials);
  par::parallel_for(n_trials, [&](std::int64_t trial) {
    Rng rng(mix_seed(seed, trial));
    const auto& start = start_pool[rng.uniform_index(start_pool.size())];
    std::vector<std::vector<double>> noise(sched.n_steps + 1,
                                           std::vector<double>(dim));
    for (auto& v : noise) rng.fill_normal(v);

    auto run_chain = [&](const ScalarModel* reward, double lambda) {
      SampleRequest req;
      req.cond = cond;
      req.seed = 0;  // unused with injected noise
      req.injected_noise = &noise;
      req.inpaint_idx.resize(env.state_dim);
      req.inpaint_vals.resize(env.state_dim);
      for (int j = 0; j < env.state_dim; ++j) {
        req.inpaint_idx[j] = j;
        req.inpaint_vals[j] = (start[j] - den.norm_mean[j]) / den.norm_std[j];
      }
      const double w = setup.guidance.w;
      req.hook = [&sched, &den, reward, cond, w, lambda](
                     std::span<const double> x, int s, std::span<double> g) {
        sdgd_adjustment(sched, den, reward, x, s, cond, w, lambda, g);
      };
      const std::vector<double> plan = sample(sched, den, req);
      return resimulated_cost(env, start, plan, den.horizon);
    };

    DriftTrial t;
    t.cost_cond = run_chain(nullptr, 0.0);
    t.cost_raw = run_chain(setup.reward_raw, setup.guidance.lambda);
    t.cost_ftr = run_chain(setup.reward_ftr, setup.guidance.lambda);
    report.trials[trial] = t;
  });

  double sr = 0.0, sf = 0.0, sr2 = 0.0, sf2 = 0.0;
  for (const auto& t : report.trials) {
    sr += t.delta_raw();
    sf += t.delta_ftr();
    sr2 += t.delta_raw() * t.delta_raw();
    sf2 += t.delta_ftr() * t.delta_ftr();
    const double d = t.delta_raw() - t.delta_ftr();
    if (d != 0.0) {
      report.n_nonzero += 1;
      if (d > 0.0) report.n_positive += 1;
    }
  }
  const double n = static_cast<double>(n_trials);
  report.mean_delta_raw = sr / n;
  report.mean_delta_ftr = sf / n;
  report.se_delta_raw =
      std::sqrt(std::max(sr2 / n - report.mean_delta_raw * report.mean_delta_raw, 0.0) /
                (n - 1.0));
  report.se_delta_ftr =
      std::sqrt(std::max(sf2 / n - report.mean_delta_ftr * report.mean_delta_ftr, 0.0) /
                (n - 1.0));
  report.sign_test_p = binomial_sign_test_p(report.n_positive, report.n_nonzero);
  return report;
}

AlignmentReport estimate_alignment(const DriftSetup& setup, const EnvSpec& env,
                                   const std::vector<std::vector<double>>& start_pool,
                                   int n_trials, std::uint64_t seed) {
  const Denoiser& den = *setup.denoiser;
  const NoiseSchedule& sched = *setup.schedule;
  const int dim = den.sample_dim;
  const double scale = setup.c_max_seg > 0.0 ? setup.c_max_seg : 1.0;
  const double cond = std::clamp(setup.limit / scale, 0.0, 1.0);
  const int f = setup.guidance.feasible_len;

  // DatasetStats view for the surrogate decode.
  DatasetStats stats;
  stats.horizon = den.horizon;
  stats.state_dim = den.state_dim;
  stats.action_dim = den.action_dim;
  const int row = den.state_dim + den.action_dim;
  stats.mean.assign(den.norm_mean.begin(), den.norm_mean.begin() + row);
  stats.stdev.assign(den.norm_std.begin(), den.norm_std.begin() + row);

  AlignmentReport report;
  report.seed = seed;
  report.trials.resize(n_trials);
  par::parallel_for(n_trials, [&](std::int64_t trial) {
    Rng rng(mix_seed(seed, trial));
    const auto& start = start_pool[rng.uniform_index(start_pool.size())];
    std::vector<int> pin_idx(env.state_dim);
    std::vector<double> pin_val(env.state_dim);
    for (int j = 0; j < env.state_dim; ++j) {
      pin_idx[j] = j;
      pin_val[j] = (start[j] - den.norm_mean[j]) / den.norm_std[j];
    }
    nn::Workspace ws(den.net);
    EpsFn eps_fn = [&](std::span<const double> x, int s,
                       std::optional<double> c, std::span<double> out) {
      den.predict_eps(x, s, c, out, ws);
    };
    GuidanceHook hook;
    if (setup.guidance.w != 0.0) {
      hook = [&](std::span<const double> x, int s, std::span<double> g) {
        sdgd_adjustment(sched, den, nullptr, x, s, cond, setup.guidance.w, 0.0, g);
      };
    }
    std::vector<double> x(dim);
    rng.fill_normal(x);
    {
      const double a = std::sqrt(sched.alpha_bar_at(sched.n_steps));
      const double b = std::sqrt(1.0 - sched.alpha_bar_at(sched.n_steps));
      for (int j = 0; j < env.state_dim; ++j) x[j] = a * pin_val[j] + b * x[j];
    }
    AlignmentTrial tr;
    tr.a_s.assign(sched.n_steps, 0.0);
    std::vector<double> noise(dim, 0.0), eps(dim), x0(dim);
    std::vector<double> gc(dim), gh(dim);
    for (int s = sched.n_steps; s >= 1; --s) {
      eps_fn(x, s, cond, eps);  // plain conditional prediction for the decode
      predict_x0(sched, x, s, eps, x0);
      surrogate_cost(env, stats, x0, gc);
      surrogate_prefix_infeasibility(env, stats, x0, f, gh);
      double a = 0.0;
      for (int i = 0; i < dim; ++i) a += gc[i] * gh[i];
      tr.a_s[s - 1] = a;
      tr.a_f += a;
      if (s == 1) {
        std::fill(noise.begin(), noise.end(), 0.0);
      } else {
        rng.fill_normal(noise);
      }
      ancestral_step(sched, eps_fn, x, s, cond, hook, noise, pin_idx, pin_val);
    }
    report.trials[trial] = std::move(tr);
  });

  double sum = 0.0;
  int pos = 0;
  for (const auto& t : report.trials) {
    sum += t.a_f;
    if (t.a_f > 0.0) ++pos;
  }
  report.mean_a_f = sum / static_cast<double>(n_trials);
  report.frac_positive = static_cast<double>(pos) / static_cast<double>(n_trials);
  return report;
}

CorrelationCurve cost_classifier_correlation(const ScalarModel& cost_model,
                                             const Dataset& ds,
                                             const NoiseSchedule& sched,
                                             std::uint64_t seed) {
  // Held-out split mirrors the training loop: every 10th segment.
  std::vector<std::size_t> held;
  for (std::size_t i = 0; i < ds.segments().size(); ++i) {
    if (i % 10 == 9) held.push_back(i);
  }
  if (held.size() < 3) throw std::invalid_argument("diagnostics: too few held-out segments");
  std::vector<std::vector<double>> flats(held.size());
  std::vector<double> truth(held.size());
  for (std::size_t i = 0; i < held.size(); ++i) {
    flats[i] = normalize_flat(ds.stats(), ds.segments()[held[i]].flat());
    truth[i] = ds.labels()[held[i]].cost;
  }
  const int dim = static_cast<int>(flats[0].size());
  CorrelationCurve curve;
  curve.r.assign(sched.n_steps, 0.0);
  curve.defined.assign(sched.n_steps, false);
  par::parallel_for(sched.n_steps, [&](std::int64_t sm1) {
    const int s = static_cast<int>(sm1) + 1;
    Rng rng(mix_seed(seed, s));
    nn::Workspace ws(cost_model.net);
    std::vector<double> eps(dim), noisy(dim), pred(held.size());
    for (std::size_t i = 0; i < held.size(); ++i) {
      rng.fill_normal(eps);
      q_sample(sched, flats[i], s, eps, noisy);
      pred[i] = cost_model.predict(noisy, s, ws);
    }
    const double n = static_cast<double>(held.size());
    double mp = 0.0, mt = 0.0;
    for (std::size_t i = 0; i < held.size(); ++i) {
      mp += pred[i];
      mt += truth[i];
    }
    mp /= n;
    mt /= n;
    double spp = 0.0, stt = 0.0, spt = 0.0;
    for (std::size_t i = 0; i < held.size(); ++i) {
      spp += (pred[i] - mp) * (pred[i] - mp);
      stt += (truth[i] - mt) * (truth[i] - mt);
      spt += (pred[i] - mp) * (truth[i] - mt);
    }
    if (spp > 1e-12 && stt > 1e-12) {
      curve.r[sm1] = spt / std::sqrt(spp * stt);
      curve.defined[sm1] = true;
    }
  });
  return curve;
}

double spearman_against_step(const CorrelationCurve& curve) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < curve.r.size(); ++i) {
    if (curve.defined[i]) {
      xs.push_back(static_cast<double>(i + 1));
      ys.push_back(curve.r[i]);
    }
  }
  const std::size_t n = xs.size();
  if (n < 3) throw std::invalid_argument("diagnostics: too few defined correlations");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(xs);
  const auto ry = ranks(ys);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
    sxy += (rx[i] - mx) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

std::pair<nn::NetSpec, nn::Params> train_dynamics_model(
    const Dataset& ds, const nn::NetSpec& net, const TrainConfig& cfg,
    LossTrace* trace) {
  const EnvSpec& env = ds.env_spec();
  nn::NetSpec spec = net;
  spec.input_dim = env.state_dim + env.action_dim;
  spec.output_dim = env.state_dim;
  spec.validate();
  // Flatten transitions.
  std::vector<std::array<double, 8>> rows;  // state, action, next_state packed
  const int sd = env.state_dim, ad = env.action_dim;
  if (sd + ad + sd > 8) throw std::invalid_argument("diagnostics: transition row too wide");
  for (const auto& ep : ds.episodes()) {
    for (std::size_t t = 0; t < ep.actions.size(); ++t) {
      std::array<double, 8> r{};
      int o = 0;
      for (int j = 0; j < sd; ++j) r[o++] = ep.states[t][j];
      for (int j = 0; j < ad; ++j) r[o++] = ep.actions[t][j];
      for (int j = 0; j < sd; ++j) r[o++] = ep.states[t + 1][j];
      rows.push_back(r);
    }
  }
  nn::Params params = nn::init_params(spec, mix_seed(cfg.seed, 0x21));
  nn::AdamState adam(params.size(), cfg.lr);
  Rng rng(mix_seed(cfg.seed, 0x22));
  std::vector<double> grads(params.size());
  std::vector<std::size_t> pick(cfg.batch);
  for (int step = 1; step <= cfg.steps; ++step) {
    for (int i = 0; i < cfg.batch; ++i) pick[i] = rng.uniform_index(rows.size());
    const double loss = nn::accumulate_batch(
        spec, cfg.batch,
        [&](std::size_t i, nn::Workspace& ws, std::span<double> g) {
          const auto& r = rows[pick[i]];
          std::vector<double> in(r.begin(), r.begin() + sd + ad);
          std::vector<double> out(sd), up(sd);
          nn::forward(spec, params, in, out, ws);
          double loss_i = 0.0;
          for (int j = 0; j < sd; ++j) {
            const double e = out[j] - r[sd + ad + j];
            loss_i += e * e;
            up[j] = 2.0 * e;
          }
          nn::backward(spec, params, ws, up, g, {});
          return loss_i;
        },
        grads);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("diagnostics: dynamics training diverged");
    }
    nn::adam_step(params, adam, grads);
    if (trace && (step % cfg.log_every == 0 || step == 1)) {
      trace->entries.emplace_back(step, loss);
    }
  }
  return {spec, std::move(params)};
}

DynamicsFn make_dynamics_fn(const nn::NetSpec& spec, const nn::Params& params) {
  return [spec, params](std::span<const double> state,
                        std::span<const double> action) {
    nn::Workspace ws(spec);
    std::vector<double> in;
    in.reserve(state.size() + action.size());
    in.insert(in.end(), state.begin(), state.end());
    in.insert(in.end(), action.begin(), action.end());
    std::vector<double> out(spec.output_dim);
    nn::forward(spec, params, in, out, ws);
    return out;
  };
}

std::vector<RolloutErrorRow> rollout_error_experiment(
    const DynamicsFn& dynamics, const NoiseSchedule& sched,
    const Denoiser& den, const Dataset& ds, std::span<const int> horizons,
    std::uint64_t seed) {
  const EnvSpec& env = ds.env_spec();
  const int L = den.horizon;
  int h_max = 0;
  for (int h : horizons) {
    if (h < 0 || h > L) throw std::invalid_argument("diagnostics: horizon out of range");
    h_max = std::max(h_max, h);
  }
  const auto& episodes = ds.episodes();
  const std::size_t n_eps = episodes.size();
  const int row = env.state_dim + env.action_dim;

  // Autoregressive: roll the dynamics model with dataset actions, recording
  // the L2 state error at every step up to h_max. Predicted states are
  // clamped to the state domain; iterating an unconstrained regressor can
  // otherwise leave the training support and diverge.
  std::vector<std::vector<double>> auto_err(n_eps,
                                            std::vector<double>(h_max + 1, 0.0));
  const double lo = env.id == EnvId::PointHazard2D ? -1.0 : 0.0;
  const double hi = 1.0;
  par::parallel_for(static_cast<std::int64_t>(n_eps), [&](std::int64_t e) {
    const auto& ep = episodes[e];
    std::vector<double> s = ep.states[0];
    for (int h = 1; h <= h_max; ++h) {
      s = dynamics(s, ep.actions[h - 1]);
      for (auto& v : s) v = std::clamp(v, lo, hi);
      double err = 0.0;
      for (int j = 0; j < env.state_dim; ++j) {
        const double d = s[j] - ep.states[h][j];
        err += d * d;
      }
      auto_err[e][h] = std::sqrt(err);
    }
  });

  // Joint: one generated segment per episode start (null condition, no
  // guidance), compared against an env rollout of its own actions. The
  // segment's last state row is L-1, so horizons past it read that row.
  const int h_cap = std::min(h_max, L - 1);
  std::vector<std::vector<double>> joint_err(n_eps,
                                             std::vector<double>(h_cap + 1, 0.0));
  par::parallel_for(static_cast<std::int64_t>(n_eps), [&](std::int64_t e) {
    const auto& ep = episodes[e];
    SampleRequest req;
    req.cond = std::nullopt;
    req.seed = mix_seed(seed, e);
    req.inpaint_idx.resize(env.state_dim);
    req.inpaint_vals.resize(env.state_dim);
    for (int j = 0; j < env.state_dim; ++j) {
      req.inpaint_idx[j] = j;
      req.inpaint_vals[j] = (ep.states[0][j] - den.norm_mean[j]) / den.norm_std[j];
    }
    const std::vector<double> plan = sample(sched, den, req);
    std::vector<double> s = ep.states[0];
    for (int h = 1; h <= h_cap; ++h) {
      std::vector<double> action(env.action_dim);
      for (int j = 0; j < env.action_dim; ++j) {
        const double a = plan[static_cast<std::size_t>(h - 1) * row + env.state_dim + j];
        action[j] = std::clamp(a, -env.action_bound, env.action_bound);
      }
      s = step(env, s, action).next_state;
      double err = 0.0;
      for (int j = 0; j < env.state_dim; ++j) {
        const double d = plan[static_cast<std::size_t>(h) * row + j] - s[j];
        err += d * d;
      }
      joint_err[e][h] = std::sqrt(err);
    }
  });

  std::vector<RolloutErrorRow> out;
  for (int h : horizons) {
    RolloutErrorRow rrow;
    rrow.horizon = h;
    if (h > 0) {
      const int hj = std::min(h, h_cap);
      double sa = 0.0, sj = 0.0;
      for (std::size_t e = 0; e < n_eps; ++e) {
        sa += auto_err[e][h];
        sj += joint_err[e][hj];
      }
      rrow.autoregressive = sa / static_cast<double>(n_eps);
      rrow.joint = sj / static_cast<double>(n_eps);
    }
    out.push_back(rrow);
  }
  return out;
}

}  // namespace sdgd
