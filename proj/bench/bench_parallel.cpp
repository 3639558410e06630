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
//
// Benchmarks the data-parallel kernels against their serial reference:
// minibatch gradient accumulation, multi-chain reverse sampling, and
// episode evaluation. Outputs must be bit-identical across modes; this
// binary verifies that while timing both.

#include <chrono>
#include <cstdio>
#include <vector>

#include "sdgd/dataset.hpp"
#include "sdgd/diffusion.hpp"
#include "sdgd/env.hpp"
#include "sdgd/parallel.hpp"
#include "sdgd/planner.hpp"

using namespace sdgd;
using clock_type = std::chrono::steady_clock;

namespace {

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

struct BenchSystem {
  EnvSpec env = make_env_spec(EnvId::ChainVel1D);
  NoiseSchedule sched = make_schedule(100);
  Dataset ds;
  Denoiser den;
  ScalarModel reward;

  BenchSystem() : ds(build()) {
    const int dim = 64;
    den.sample_dim = dim;
    den.n_steps = sched.n_steps;
    den.net = nn::NetSpec{dim + kStepEmbedDim + kCondEmbedDim, dim, {256, 256, 256}};
    den.params = nn::init_params(den.net, 1);
    den.horizon = 32;
    den.state_dim = 1;
    den.action_dim = 1;
    den.env_id = "ChainVel1D";
    expand_stats(ds.stats(), den.norm_mean, den.norm_std);
    reward.sample_dim = dim;
    reward.n_steps = sched.n_steps;
    reward.net = nn::NetSpec{dim + kStepEmbedDim, 1, {256, 256, 256}};
    reward.params = nn::init_params(reward.net, 2);
  }

  Dataset build() {
    std::vector<Episode> eps;
    for (int i = 0; i < 12; ++i) {
      eps.push_back(rollout(env, i % 2 ? PolicyId::Random : PolicyId::Safe,
                            mix_seed(9, i)));
    }
    return Dataset::build(eps, env, LabelConfig{});
  }
};

template <typename F>
double timed(par::Mode mode, F&& work) {
  par::set_mode(mode);
  const auto t0 = clock_type::now();
  work();
  return seconds_since(t0);
}

}  // namespace

int main() {
  BenchSystem sys;
  std::printf("threads available: %d (openmp %s)\n", par::max_threads(),
              par::openmp_available() ? "yes" : "no");

  // 1. minibatch gradient accumulation
  {
    Rng rng(3);
    TrainBatch batch;
    for (int i = 0; i < 256; ++i) {
      std::vector<double> x(64);
      rng.fill_normal(x);
      batch.x0.push_back(std::move(x));
      batch.cond.push_back(i % 4 ? std::optional<double>(0.25) : std::nullopt);
    }
    std::vector<double> g_serial(sys.den.params.size());
    std::vector<double> g_parallel(sys.den.params.size());
    double loss_s = 0.0, loss_p = 0.0;
    const double t_serial = timed(par::Mode::Serial, [&] {
      Rng r(11);
      loss_s = denoising_loss(sys.den, sys.sched, batch, r, g_serial);
    });
    const double t_parallel = timed(par::Mode::OpenMP, [&] {
      Rng r(11);
      loss_p = denoising_loss(sys.den, sys.sched, batch, r, g_parallel);
    });
    const bool same = loss_s == loss_p && g_serial == g_parallel;
    std::printf("batch-gradient  serial %.3fs  parallel %.3fs  speedup %.2fx  bitwise %s\n",
                t_serial, t_parallel, t_serial / t_parallel, same ? "equal" : "DIFFER");
  }

  // 2. multi-chain reverse sampling
  {
    std::vector<SampleRequest> reqs(24);
    for (std::size_t i = 0; i < reqs.size(); ++i) {
      reqs[i].seed = mix_seed(21, i);
      reqs[i].cond = 0.1;
    }
    std::vector<std::vector<double>> out_s, out_p;
    const double t_serial = timed(par::Mode::Serial,
                                  [&] { out_s = sample_many(sys.sched, sys.den, reqs); });
    const double t_parallel = timed(par::Mode::OpenMP,
                                    [&] { out_p = sample_many(sys.sched, sys.den, reqs); });
    std::printf("chain-sampling  serial %.3fs  parallel %.3fs  speedup %.2fx  bitwise %s\n",
                t_serial, t_parallel, t_serial / t_parallel,
                out_s == out_p ? "equal" : "DIFFER");
  }

  // 3. episode evaluation
  {
    PlannerModels models;
    models.schedule = &sys.sched;
    models.denoiser = &sys.den;
    models.reward = &sys.reward;
    models.c_max_seg = sys.ds.stats().c_max_seg;
    PlannerConfig cfg;
    cfg.guidance.r_us = sys.ds.r_us();
    cfg.guidance.w = 2.0;
    cfg.guidance.lambda = 0.02;
    const auto schedule = BudgetSchedule::single(2.0, sys.env.episode_len);
    std::vector<EpisodeRecord> rec_s, rec_p;
    const double t_serial = timed(par::Mode::Serial, [&] {
      rec_s = evaluate(sys.env, models, cfg, schedule, 6, 77);
    });
    const double t_parallel = timed(par::Mode::OpenMP, [&] {
      rec_p = evaluate(sys.env, models, cfg, schedule, 6, 77);
    });
    bool same = rec_s.size() == rec_p.size();
    for (std::size_t i = 0; same && i < rec_s.size(); ++i) {
      same = rec_s[i].episode.states == rec_p[i].episode.states &&
             rec_s[i].total_cost == rec_p[i].total_cost;
    }
    std::printf("episode-eval    serial %.3fs  parallel %.3fs  speedup %.2fx  bitwise %s\n",
                t_serial, t_parallel, t_serial / t_parallel, same ? "equal" : "DIFFER");
  }
  return 0;
}
