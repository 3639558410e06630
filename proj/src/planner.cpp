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

#include "sdgd/planner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sdgd/parallel.hpp"

namespace sdgd {

BudgetSchedule BudgetSchedule::single(double limit, int episode_len) {
  BudgetSchedule s;
  s.segments.push_back({0, limit, episode_len});
  return s;
}

void BudgetSchedule::validate(int episode_len) const {
  if (segments.empty()) throw std::invalid_argument("planner: empty budget schedule");
  if (segments.front().start != 0) {
    throw std::invalid_argument("planner: schedule must start at step 0");
  }
  for (std::size_t k = 0; k < segments.size(); ++k) {
    if (segments[k].limit < 0.0) {
      throw std::invalid_argument("planner: limits must be >= 0");
    }
    const int end = k + 1 < segments.size() ? segments[k + 1].start : episode_len;
    if (end <= segments[k].start) {
      throw std::invalid_argument("planner: schedule starts must be strictly increasing");
    }
    if (segments[k].horizon != end - segments[k].start) {
      throw std::invalid_argument("planner: segment horizon inconsistent with starts");
    }
  }
}

int BudgetSchedule::active_index(int t) const {
  for (std::size_t k = segments.size(); k-- > 0;) {
    if (t >= segments[k].start) {
      if (t < segments[k].start + segments[k].horizon) return static_cast<int>(k);
      break;
    }
  }
  throw std::invalid_argument("planner: step outside schedule coverage");
}

double remaining_budget(const BudgetSchedule& schedule, int t,
                        std::span<const double> consumed_per_segment) {
  const int k = schedule.active_index(t);
  if (static_cast<std::size_t>(k) >= consumed_per_segment.size()) {
    throw std::invalid_argument("planner: consumed vector too short");
  }
  return std::max(schedule.segments[k].limit - consumed_per_segment[k], 0.0);
}

namespace {

GuidanceHook make_hook(const PlannerModels& m, const PlannerConfig& cfg,
                       std::optional<double> cond_norm, double limit_raw) {
  switch (cfg.variant) {
    case PlanVariant::Sdgd:
    case PlanVariant::NoCg: {
      const double lambda = cfg.variant == PlanVariant::NoCg ? 0.0 : cfg.guidance.lambda;
      const double w = cfg.guidance.w;
      const Denoiser* den = m.denoiser;
      const ScalarModel* reward = m.reward;
      const NoiseSchedule* sched = m.schedule;
      if (w == 0.0 && lambda == 0.0) return nullptr;
      return [sched, den, reward, cond_norm, w, lambda](
                 std::span<const double> x, int s, std::span<double> g) {
        sdgd_adjustment(*sched, *den, reward, x, s, cond_norm, w, lambda, g);
      };
    }
    case PlanVariant::NoCfg: {
      const double lambda = cfg.guidance.lambda;
      const Denoiser* den = m.denoiser;
      const ScalarModel* reward = m.reward;
      const NoiseSchedule* sched = m.schedule;
      if (lambda == 0.0) return nullptr;
      return [sched, den, reward, lambda](std::span<const double> x, int s,
                                          std::span<double> g) {
        sdgd_adjustment(*sched, *den, reward, x, s, std::nullopt, 0.0, lambda, g);
      };
    }
    case PlanVariant::Swapped: {
      const double lambda = cfg.guidance.lambda;
      const double w = cfg.guidance.w;
      const Denoiser* den = m.denoiser_ret;
      const ScalarModel* cost = m.cost;
      const NoiseSchedule* sched = m.schedule;
      return [sched, den, cost, cond_norm, w, lambda, limit_raw](
                 std::span<const double> x, int s, std::span<double> g) {
        sdgd_adjustment(*sched, *den, nullptr, x, s, cond_norm, w, 0.0, g);
        nn::Workspace ws(cost->net);
        std::vector<double> hg(cost->sample_dim);
        cost_hinge(*cost, x, s, limit_raw, hg, ws);
        add_scaled(g, hg, -lambda);
      };
    }
  }
  return nullptr;
}

const Denoiser& active_denoiser(const PlannerModels& m, const PlannerConfig& cfg) {
  if (cfg.variant == PlanVariant::Swapped) {
    if (m.denoiser_ret == nullptr || m.cost == nullptr) {
      throw std::invalid_argument("planner: swapped variant needs return denoiser and cost model");
    }
    return *m.denoiser_ret;
  }
  return *m.denoiser;
}

}  // namespace

std::vector<double> plan_segment(const PlannerModels& models,
                                 const PlannerConfig& cfg,
                                 std::span<const double> state, double budget,
                                 std::uint64_t seed) {
  const Denoiser& den = active_denoiser(models, cfg);
  if (static_cast<int>(state.size()) != den.state_dim) {
    throw std::invalid_argument("planner: state dim does not match denoiser");
  }
  const double scale = models.c_max_seg > 0.0 ? models.c_max_seg : 1.0;
  const double budget_norm = std::clamp(budget / scale, 0.0, 1.0);

  SampleRequest req;
  req.seed = seed;
  std::optional<double> cond_norm;
  switch (cfg.variant) {
    case PlanVariant::Sdgd:
    case PlanVariant::NoCg:
      cond_norm = budget_norm;
      req.cond = cond_norm;
      break;
    case PlanVariant::NoCfg:
      req.cond = std::nullopt;
      break;
    case PlanVariant::Swapped:
      cond_norm = cfg.swapped_target_return;
      req.cond = cond_norm;
      break;
  }
  req.hook = make_hook(models, cfg, cond_norm, budget);

  // Pin the current state into position 0 (normalized space).
  req.inpaint_idx.resize(den.state_dim);
  req.inpaint_vals.resize(den.state_dim);
  for (int j = 0; j < den.state_dim; ++j) {
    req.inpaint_idx[j] = j;
    const double mean = den.norm_mean.empty() ? 0.0 : den.norm_mean[j];
    const double stdv = den.norm_std.empty() ? 1.0 : den.norm_std[j];
    req.inpaint_vals[j] = (state[j] - mean) / stdv;
  }
  return sample(*models.schedule, den, req);
}

EpisodeRecord run_episode(const EnvSpec& env, const PlannerModels& models,
                          const PlannerConfig& cfg,
                          const BudgetSchedule& schedule, std::uint64_t seed) {
  schedule.validate(env.episode_len);
  cfg.guidance.validate(cfg.horizon);
  const Denoiser& den = active_denoiser(models, cfg);
  if (den.state_dim != env.state_dim || den.action_dim != env.action_dim ||
      den.horizon != cfg.horizon) {
    throw std::invalid_argument("planner: model/env dimension mismatch");
  }
  const int f = cfg.exec_prefix;
  if (f < 1 || f > cfg.horizon) {
    throw std::invalid_argument("planner: exec_prefix must be in [1, L]");
  }
  const int row = env.state_dim + env.action_dim;

  EpisodeRecord rec;
  rec.seed = seed;
  rec.segment_costs.assign(schedule.segments.size(), 0.0);
  std::vector<double> state = reset(env, seed);
  rec.episode.states.push_back(state);

  std::vector<double> plan;
  int replan_count = 0;
  for (int t = 0; t < env.episode_len; ++t) {
    if (t % f == 0) {
      const int k = schedule.active_index(t);
      const double active = schedule.segments[k].limit;
      const double remaining = remaining_budget(schedule, t, rec.segment_costs);
      const double cond = cfg.mode == ConditionMode::Decrement ? remaining : active;
      plan = plan_segment(models, cfg, state, cond,
                          mix_seed(seed, 0x9000 + replan_count));
      ReplanLog log;
      log.t = t;
      log.active_limit = active;
      log.remaining = remaining;
      log.cond_limit = cond;
      log.plan = plan;
      rec.replans.push_back(std::move(log));
      ++replan_count;
    }
    ReplanLog& log = rec.replans.back();
    const int plan_t = t - log.t;
    std::vector<double> action(env.action_dim);
    bool clipped = false;
    for (int j = 0; j < env.action_dim; ++j) {
      const double a = plan[static_cast<std::size_t>(plan_t) * row + env.state_dim + j];
      const double ac = std::clamp(a, -env.action_bound, env.action_bound);
      if (ac != a) clipped = true;
      action[j] = ac;
    }
    if (clipped) log.clip_events += 1;
    StepResult r = step(env, state, action);
    const int k = schedule.active_index(t);
    rec.segment_costs[k] += r.cost;
    rec.total_reward += r.reward;
    rec.total_cost += r.cost;
    log.realized_reward += r.reward;
    log.realized_cost += r.cost;
    rec.episode.actions.push_back(action);
    rec.episode.rewards.push_back(r.reward);
    rec.episode.costs.push_back(r.cost);
    state = r.next_state;
    rec.episode.states.push_back(state);
  }
  return rec;
}

std::vector<EpisodeRecord> evaluate(const EnvSpec& env,
                                    const PlannerModels& models,
                                    const PlannerConfig& cfg,
                                    const BudgetSchedule& schedule,
                                    int n_episodes, std::uint64_t base_seed) {
  std::vector<EpisodeRecord> out(n_episodes);
  par::parallel_for(n_episodes, [&](std::int64_t i) {
    out[i] = run_episode(env, models, cfg, schedule, mix_seed(base_seed, i));
  });
  return out;
}

NormalizationRef compute_normalization_ref(const EnvSpec& env,
                                           const Dataset& ds) {
  NormalizationRef ref;
  constexpr int kEpisodes = 1000;
  constexpr std::uint64_t kSeed = 0x5eedba5e;
  std::vector<double> returns(kEpisodes, 0.0);
  par::parallel_for(kEpisodes, [&](std::int64_t i) {
    Episode ep = rollout(env, PolicyId::Random, mix_seed(kSeed, i));
    double r = 0.0;
    for (double v : ep.rewards) r += v;
    returns[i] = r;
  });
  double sum = 0.0;
  for (double r : returns) sum += r;
  ref.r_rand = sum / kEpisodes;
  ref.r_best = ds.max_episode_return();
  return ref;
}

Metrics normalized_metrics(std::span<const EpisodeRecord> records,
                           const NormalizationRef& ref, double limit) {
  if (records.empty()) throw std::invalid_argument("planner: no records");
  Metrics m;
  const double n = static_cast<double>(records.size());
  double sr = 0.0, sc = 0.0, sr2 = 0.0, sc2 = 0.0;
  for (const auto& r : records) {
    sr += r.total_reward;
    sc += r.total_cost;
    sr2 += r.total_reward * r.total_reward;
    sc2 += r.total_cost * r.total_cost;
  }
  m.mean_return = sr / n;
  m.mean_cost = sc / n;
  if (records.size() > 1) {
    const double vr = std::max(sr2 / n - m.mean_return * m.mean_return, 0.0);
    const double vc = std::max(sc2 / n - m.mean_cost * m.mean_cost, 0.0);
    m.se_return = std::sqrt(vr / (n - 1.0));
    m.se_cost = std::sqrt(vc / (n - 1.0));
  }
  const double denom = ref.r_best - ref.r_rand;
  m.normalized_reward = denom != 0.0 ? (m.mean_return - ref.r_rand) / denom : 0.0;
  if (limit > 0.0) {
    m.normalized_cost = m.mean_cost / limit;
  } else {
    m.normalized_cost = m.mean_cost;
    m.cost_flagged = true;
  }
  return m;
}

}  // namespace sdgd
