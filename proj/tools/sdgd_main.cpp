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
// Command-line pipeline: offline data generation, model training, budgeted
// evaluation, the sweep/ablation experiments and the diagnostic runs. Every
// command is a pure function of (config, seed) and emits CSV/JSON with a
// config-hash sidecar.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdgd/config.hpp"
#include "sdgd/dataset.hpp"
#include "sdgd/diagnostics.hpp"
#include "sdgd/diffusion.hpp"
#include "sdgd/env.hpp"
#include "sdgd/guidance.hpp"
#include "sdgd/io.hpp"
#include "sdgd/planner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sdgd::cli {

struct Context {
  RunConfig cfg;
  std::string hash;
  fs::path out;
};

nn::NetSpec default_net() {
  nn::NetSpec net;
  net.hidden = {256, 256, 256};
  return net;
}

LabelConfig label_config(const RunConfig& cfg) {
  LabelConfig lc;
  lc.horizon = cfg.horizon;
  lc.stride = cfg.stride;
  lc.gamma = 1.0;
  lc.gamma_c = 1.0;
  lc.feasible_len = cfg.feasible_len;
  lc.r_us = cfg.r_us;
  return lc;
}

TrainConfig train_config(const RunConfig& cfg, std::uint64_t stream) {
  TrainConfig tc;
  tc.steps = cfg.train_steps;
  tc.batch = cfg.batch;
  tc.lr = cfg.lr;
  tc.p_uncond = cfg.p_uncond;
  tc.seed = mix_seed(cfg.seed, stream);
  tc.log_every = 100;
  return tc;
}

void write_loss_trace(const fs::path& path, const LossTrace& trace,
                      const Context& ctx) {
  CsvWriter csv(path, {"step", "loss"}, ctx.hash, ctx.cfg.seed);
  for (const auto& [step, loss] : trace.entries) {
    csv.row({std::to_string(step), format_double(loss)});
  }
  csv.close();
}

Dataset load_dataset_for(const RunConfig& cfg, const fs::path& data_path) {
  auto [episodes, meta] = load_dataset(data_path);
  if (meta.env_id != cfg.env_id) {
    throw std::invalid_argument("dataset env_id '" + meta.env_id +
                                "' does not match config env_id '" + cfg.env_id + "'");
  }
  EnvSpec spec = make_env_spec(parse_env_id(meta.env_id));
  spec.episode_len = meta.episode_len;
  return Dataset::build(std::move(episodes), spec, label_config(cfg));
}

// Denoiser batch sampler over cost-limit conditions (normalized by
// c_max_seg), with p_uncond dropout handled by the dataset draw.
BatchSampler cost_cond_sampler(const Dataset& ds, double p_uncond) {
  const double scale = ds.stats().c_max_seg > 0.0 ? ds.stats().c_max_seg : 1.0;
  return [&ds, p_uncond, scale](int batch, Rng& rng) {
    const auto cb = ds.sample_conditioned_batch(batch, p_uncond, rng);
    TrainBatch tb;
    tb.x0 = cb.segments;
    tb.cond.reserve(batch);
    for (const auto& c : cb.conditions) {
      if (c.is_null) {
        tb.cond.push_back(std::nullopt);
      } else {
        tb.cond.push_back(c.limit / scale);
      }
    }
    return tb;
  };
}

// Return-conditioned sampler for the swapped baseline: each segment is
// conditioned on its own relabeled return, min-max normalized.
BatchSampler return_cond_sampler(const Dataset& ds, double p_uncond) {
  double lo = 1e300, hi = -1e300;
  for (const auto& lab : ds.labels()) {
    lo = std::min(lo, lab.r_hat);
    hi = std::max(hi, lab.r_hat);
  }
  const double span = hi - lo > 1e-12 ? hi - lo : 1.0;
  return [&ds, p_uncond, lo, span](int batch, Rng& rng) {
    TrainBatch tb;
    for (int i = 0; i < batch; ++i) {
      const std::size_t idx = rng.uniform_index(ds.segments().size());
      tb.x0.push_back(normalize_flat(ds.stats(), ds.segments()[idx].flat()));
      if (rng.uniform01() < p_uncond) {
        tb.cond.push_back(std::nullopt);
      } else {
        tb.cond.push_back((ds.labels()[idx].r_hat - lo) / span);
      }
    }
    return tb;
  };
}

void attach_metadata(Denoiser& den, const Dataset& ds, const std::string& kind) {
  const auto& st = ds.stats();
  den.env_id = to_string(ds.env_spec().id);
  den.cond_kind = kind;
  den.horizon = st.horizon;
  den.state_dim = st.state_dim;
  den.action_dim = st.action_dim;
  expand_stats(st, den.norm_mean, den.norm_std);
}

Denoiser train_cost_denoiser(const Dataset& ds, const RunConfig& cfg,
                             LossTrace* trace) {
  const auto sched = make_schedule(cfg.n_diffusion_steps);
  const int dim = ds.segments().front().flat_dim();
  Denoiser den = train_denoiser(cost_cond_sampler(ds, cfg.p_uncond), default_net(),
                                dim, sched, train_config(cfg, 0xD1), trace);
  attach_metadata(den, ds, "cost_limit");
  return den;
}

Denoiser train_return_denoiser(const Dataset& ds, const RunConfig& cfg,
                               LossTrace* trace) {
  const auto sched = make_schedule(cfg.n_diffusion_steps);
  const int dim = ds.segments().front().flat_dim();
  Denoiser den = train_denoiser(return_cond_sampler(ds, cfg.p_uncond), default_net(),
                                dim, sched, train_config(cfg, 0xD2), trace);
  attach_metadata(den, ds, "return");
  return den;
}

struct RunMeta {
  double c_max_seg = 0.0;
  double r_rand = 0.0;
  double r_best = 0.0;
  double r_us = -1.0;
};

void save_run_meta(const Context& ctx, const Dataset& ds, const RunMeta& meta) {
  json j{{"env_id", ctx.cfg.env_id},
         {"L", ctx.cfg.horizon},
         {"N", ctx.cfg.n_diffusion_steps},
         {"f", ctx.cfg.feasible_len},
         {"r_us", meta.r_us},
         {"c_max_seg", meta.c_max_seg},
         {"r_rand", meta.r_rand},
         {"r_best", meta.r_best},
         {"gamma", ds.stats().gamma},
         {"gamma_c", ds.stats().gamma_c},
         {"config_hash", ctx.hash},
         {"code_version", kCodeVersion}};
  write_text_file(ctx.out / "run_meta.json", j.dump(2) + "\n");
}

RunMeta load_run_meta(const fs::path& ckpt_dir) {
  std::ifstream f(ckpt_dir / "run_meta.json");
  if (!f) throw std::runtime_error("missing run_meta.json in " + ckpt_dir.string());
  json j = json::parse(f);
  RunMeta meta;
  meta.c_max_seg = j.at("c_max_seg").get<double>();
  meta.r_rand = j.at("r_rand").get<double>();
  meta.r_best = j.at("r_best").get<double>();
  meta.r_us = j.at("r_us").get<double>();
  return meta;
}

// --- gen-data ----------------------------------------------------------------

int cmd_gen_data(const Context& ctx, const fs::path& data_out) {
  const RunConfig& cfg = ctx.cfg;
  const EnvSpec spec = cfg.env_spec();
  const int n_safe = static_cast<int>(cfg.mix_safe * cfg.n_episodes + 0.5);
  const int n_greedy = static_cast<int>(cfg.mix_greedy * cfg.n_episodes + 0.5);
  std::vector<Episode> episodes;
  episodes.reserve(cfg.n_episodes);
  for (int i = 0; i < cfg.n_episodes; ++i) {
    const PolicyId pol = i < n_safe               ? PolicyId::Safe
                         : i < n_safe + n_greedy  ? PolicyId::Greedy
                                                  : PolicyId::Random;
    episodes.push_back(rollout(spec, pol, mix_seed(cfg.seed, i)));
  }
  DatasetFileMeta meta{cfg.env_id, spec.state_dim, spec.action_dim,
                       spec.episode_len, cfg.n_episodes, 1.0, 1.0};
  save_dataset(data_out, episodes, meta);

  // Stats and the resolved penalty bound, from the freshly written file so
  // the printed numbers match what training will see.
  auto [loaded, lmeta] = load_dataset(data_out);
  auto ds = Dataset::build(std::move(loaded), spec, label_config(cfg));
  const auto& st = ds.stats();
  const double bound = r_us_bound(st.r_min, st.r_max, st.gamma, st.horizon);
  std::cout << "dataset: " << data_out.string() << "\n"
            << "episodes: " << cfg.n_episodes << "  segments: "
            << ds.segments().size() << "\n"
            << "r_min: " << format_double(st.r_min)
            << "  r_max: " << format_double(st.r_max)
            << "  c_max_seg: " << format_double(st.c_max_seg) << "\n"
            << "r_us bound: " << format_double(bound)
            << "  resolved r_us: " << format_double(ds.r_us()) << "\n";
  return 0;
}

// --- train ---------------------------------------------------------------------

int cmd_train(const Context& ctx, const fs::path& data_path) {
  const RunConfig& cfg = ctx.cfg;
  Dataset ds = load_dataset_for(cfg, data_path);
  const auto sched = make_schedule(cfg.n_diffusion_steps);

  LossTrace den_trace;
  Denoiser den = train_cost_denoiser(ds, cfg, &den_trace);
  save_denoiser(ctx.out / "denoiser.bin", den);
  write_loss_trace(ctx.out / "denoiser_loss.csv", den_trace, ctx);

  LossTrace ftr_trace, raw_trace, cost_trace;
  RegressionReport ftr_rep, raw_rep, cost_rep;
  ScalarModel ftr = train_reward_model(ds, sched, RewardMode::FTR, default_net(),
                                       train_config(cfg, 0xA1), &ftr_trace, &ftr_rep);
  save_scalar_model(ctx.out / "reward_ftr.bin", ftr);
  write_loss_trace(ctx.out / "reward_ftr_loss.csv", ftr_trace, ctx);
  ScalarModel raw = train_reward_model(ds, sched, RewardMode::Raw, default_net(),
                                       train_config(cfg, 0xA2), &raw_trace, &raw_rep);
  save_scalar_model(ctx.out / "reward_raw.bin", raw);
  write_loss_trace(ctx.out / "reward_raw_loss.csv", raw_trace, ctx);
  ScalarModel cost = train_cost_model(ds, sched, default_net(),
                                      train_config(cfg, 0xA3), &cost_trace, &cost_rep);
  save_scalar_model(ctx.out / "cost.bin", cost);
  write_loss_trace(ctx.out / "cost_loss.csv", cost_trace, ctx);
  {
    CsvWriter csv(ctx.out / "cost_heldout_mse.csv", {"s", "mse"}, ctx.hash, cfg.seed);
    for (std::size_t s = 0; s < cost_rep.heldout_mse_per_step.size(); ++s) {
      csv.row({std::to_string(s + 1), format_double(cost_rep.heldout_mse_per_step[s])});
    }
    csv.close();
  }

  RunMeta meta;
  meta.c_max_seg = ds.stats().c_max_seg;
  const auto ref = compute_normalization_ref(ds.env_spec(), ds);
  meta.r_rand = ref.r_rand;
  meta.r_best = ref.r_best;
  meta.r_us = ds.r_us();
  save_run_meta(ctx, ds, meta);

  std::cout << "checkpoints written to " << ctx.out.string() << "\n"
            << "held-out mse: reward_ftr " << format_double(ftr_rep.heldout_mse)
            << "  reward_raw " << format_double(raw_rep.heldout_mse)
            << "  cost " << format_double(cost_rep.heldout_mse) << "\n";
  return 0;
}

// --- eval ----------------------------------------------------------------------

struct LoadedModels {
  NoiseSchedule sched;
  Denoiser den;
  ScalarModel reward_ftr;
  ScalarModel reward_raw;
  ScalarModel cost;
  RunMeta meta;

  PlannerModels planner_models() const {
    PlannerModels m;
    m.schedule = &sched;
    m.denoiser = &den;
    m.reward = &reward_ftr;
    m.cost = &cost;
    m.c_max_seg = meta.c_max_seg;
    return m;
  }
};

LoadedModels load_models(const Context& ctx, const fs::path& ckpt_dir) {
  LoadedModels lm;
  lm.sched = make_schedule(ctx.cfg.n_diffusion_steps);
  lm.den = load_denoiser(ckpt_dir / "denoiser.bin");
  lm.reward_ftr = load_scalar_model(ckpt_dir / "reward_ftr.bin");
  lm.reward_raw = load_scalar_model(ckpt_dir / "reward_raw.bin");
  lm.cost = load_scalar_model(ckpt_dir / "cost.bin");
  lm.meta = load_run_meta(ckpt_dir);
  if (lm.den.n_steps != ctx.cfg.n_diffusion_steps) {
    throw std::invalid_argument("checkpoint N does not match config N");
  }
  if (lm.den.horizon != ctx.cfg.horizon) {
    throw std::invalid_argument("checkpoint L does not match config L");
  }
  return lm;
}

PlannerConfig planner_config(const Context& ctx, const RunMeta& meta) {
  PlannerConfig pc;
  pc.horizon = ctx.cfg.horizon;
  pc.exec_prefix = ctx.cfg.feasible_len;
  pc.guidance = ctx.cfg.guidance(meta.r_us);
  pc.mode = ctx.cfg.mode;
  return pc;
}

constexpr int kEvalSeeds = 3;

std::uint64_t eval_seed(const RunConfig& cfg, int k) {
  return mix_seed(cfg.seed, 7000 + k);
}

int cmd_eval(const Context& ctx, const fs::path& ckpt_dir) {
  const RunConfig& cfg = ctx.cfg;
  const LoadedModels lm = load_models(ctx, ckpt_dir);
  const EnvSpec spec = cfg.env_spec();
  const PlannerModels models = lm.planner_models();
  const PlannerConfig pc = planner_config(ctx, lm.meta);
  const BudgetSchedule schedule = cfg.budget_schedule();
  const NormalizationRef ref{lm.meta.r_rand, lm.meta.r_best};

  std::vector<EpisodeRecord> all;
  CsvWriter csv(ctx.out / "metrics.csv",
                {"seed", "normalized_reward", "normalized_cost", "mean_return",
                 "mean_cost"},
                ctx.hash, cfg.seed);
  for (int k = 0; k < kEvalSeeds; ++k) {
    const auto records =
        evaluate(spec, models, pc, schedule, cfg.episodes, eval_seed(cfg, k));
    const auto m = normalized_metrics(records, ref, cfg.limit);
    csv.row({std::to_string(k), format_double(m.normalized_reward),
             format_double(m.normalized_cost), format_double(m.mean_return),
             format_double(m.mean_cost)});
    std::cout << "seed " << k << ": normalized_reward "
              << format_double(m.normalized_reward) << "  normalized_cost "
              << format_double(m.normalized_cost)
              << (m.cost_flagged ? " (raw cost, limit 0)" : "") << "\n";
    all.insert(all.end(), records.begin(), records.end());
  }
  csv.close();
  write_episode_records(ctx.out / "records.jsonl", all, ctx.hash, cfg.seed);
  std::cout << "wrote " << all.size() << " episode records\n";
  return 0;
}

// --- sweep ---------------------------------------------------------------------

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    vals.push_back(std::stod(item));
  }
  if (vals.empty()) throw std::invalid_argument("empty values list");
  return vals;
}

int cmd_sweep(const Context& ctx, const fs::path& ckpt_dir,
              const std::string& axis, const std::string& values_text,
              const std::optional<fs::path>& data_path) {
  const RunConfig& cfg = ctx.cfg;
  const LoadedModels lm = load_models(ctx, ckpt_dir);
  const EnvSpec spec = cfg.env_spec();
  const NormalizationRef ref{lm.meta.r_rand, lm.meta.r_best};
  const std::uint64_t den_checksum = file_checksum(ckpt_dir / "denoiser.bin");

  auto eval_at = [&](const PlannerModels& models, const PlannerConfig& pc,
                     double limit, int k) {
    const auto schedule = BudgetSchedule::single(limit, spec.episode_len);
    const auto records =
        evaluate(spec, models, pc, schedule, cfg.episodes, eval_seed(cfg, k));
    return normalized_metrics(records, ref, limit);
  };

  if (axis == "limit") {
    const auto values = values_text.empty() ? std::vector<double>{2, 8, 16}
                                            : parse_values(values_text);
    CsvWriter csv(ctx.out / "sweep_limit.csv",
                  {"limit", "seed", "normalized_reward", "normalized_cost",
                   "mean_return", "mean_cost", "denoiser_checksum"},
                  ctx.hash, cfg.seed);
    const PlannerModels models = lm.planner_models();
    const PlannerConfig pc = planner_config(ctx, lm.meta);
    for (double l : values) {
      for (int k = 0; k < kEvalSeeds; ++k) {
        const auto m = eval_at(models, pc, l, k);
        csv.row({format_double(l), std::to_string(k),
                 format_double(m.normalized_reward),
                 format_double(m.normalized_cost), format_double(m.mean_return),
                 format_double(m.mean_cost), std::to_string(den_checksum)});
      }
    }
    csv.close();
    return 0;
  }
  if (axis == "lambda-w") {
    const std::vector<double> lambdas{0.01, 0.02, 0.04, 0.08};
    const std::vector<double> ws{1, 2, 4, 8};
    CsvWriter csv(ctx.out / "sweep_lambda_w.csv",
                  {"lambda", "w", "seed", "normalized_reward", "normalized_cost",
                   "mean_return", "mean_cost"},
                  ctx.hash, cfg.seed);
    const PlannerModels models = lm.planner_models();
    for (double lambda : lambdas) {
      for (double w : ws) {
        PlannerConfig pc = planner_config(ctx, lm.meta);
        pc.guidance.lambda = lambda;
        pc.guidance.w = w;
        for (int k = 0; k < kEvalSeeds; ++k) {
          const auto m = eval_at(models, pc, cfg.limit, k);
          csv.row({format_double(lambda), format_double(w), std::to_string(k),
                   format_double(m.normalized_reward),
                   format_double(m.normalized_cost),
                   format_double(m.mean_return), format_double(m.mean_cost)});
        }
      }
    }
    csv.close();
    return 0;
  }
  if (axis == "f") {
    if (!data_path.has_value()) {
      throw std::invalid_argument("sweep over f needs --data to retrain the reward model");
    }
    Dataset ds = load_dataset_for(cfg, *data_path);
    const auto values = values_text.empty() ? std::vector<double>{0, 4, 8, 16}
                                            : parse_values(values_text);
    CsvWriter csv(ctx.out / "sweep_f.csv",
                  {"f", "seed", "normalized_reward", "normalized_cost",
                   "mean_return", "mean_cost"},
                  ctx.hash, cfg.seed);
    for (double fv : values) {
      const int f = static_cast<int>(fv);
      ScalarModel reward;
      if (f == 0) {
        // f = 0 encodes the no-relabeling ablation: raw return targets
        reward = train_reward_model(ds, lm.sched, RewardMode::Raw, default_net(),
                                    train_config(cfg, 0xA2), nullptr, nullptr);
      } else {
        const auto labels = ds.relabel(f, std::nullopt);
        reward = train_reward_model_with_labels(ds, labels, lm.sched,
                                                RewardMode::FTR, default_net(),
                                                train_config(cfg, 0xA1), nullptr,
                                                nullptr);
      }
      PlannerModels models = lm.planner_models();
      models.reward = &reward;
      PlannerConfig pc = planner_config(ctx, lm.meta);
      if (f > 0) pc.exec_prefix = f;
      for (int k = 0; k < kEvalSeeds; ++k) {
        const auto m = eval_at(models, pc, cfg.limit, k);
        csv.row({format_double(fv), std::to_string(k),
                 format_double(m.normalized_reward),
                 format_double(m.normalized_cost), format_double(m.mean_return),
                 format_double(m.mean_cost)});
      }
    }
    csv.close();
    return 0;
  }
  throw std::invalid_argument("unknown sweep axis '" + axis +
                              "' (expected limit, lambda-w, or f)");
}

// --- ablate --------------------------------------------------------------------

int cmd_ablate(const Context& ctx, const fs::path& ckpt_dir,
               const std::optional<fs::path>& data_path) {
  const RunConfig& cfg = ctx.cfg;
  const LoadedModels lm = load_models(ctx, ckpt_dir);
  const EnvSpec spec = cfg.env_spec();
  const NormalizationRef ref{lm.meta.r_rand, lm.meta.r_best};

  // The swapped baseline needs a return-conditioned denoiser; train it on
  // demand and cache it next to the other checkpoints.
  Denoiser den_ret;
  const fs::path ret_path = ckpt_dir / "denoiser_ret.bin";
  if (fs::exists(ret_path)) {
    den_ret = load_denoiser(ret_path);
  } else {
    if (!data_path.has_value()) {
      throw std::invalid_argument(
          "ablate needs --data to train the swapped-guidance denoiser");
    }
    Dataset ds = load_dataset_for(cfg, *data_path);
    den_ret = train_return_denoiser(ds, cfg, nullptr);
    save_denoiser(ret_path, den_ret);
  }

  CsvWriter csv(ctx.out / "ablation.csv",
                {"variant", "lambda", "w", "seed", "normalized_reward",
                 "normalized_cost", "mean_return", "mean_cost"},
                ctx.hash, cfg.seed);
  const BudgetSchedule schedule = cfg.budget_schedule();
  struct Variant {
    const char* name;
    PlanVariant kind;
  };
  const Variant variants[] = {{"sdgd", PlanVariant::Sdgd},
                              {"no_cg", PlanVariant::NoCg},
                              {"no_cfg", PlanVariant::NoCfg},
                              {"swapped", PlanVariant::Swapped}};
  for (const auto& variant : variants) {
    PlannerModels models = lm.planner_models();
    models.denoiser_ret = &den_ret;
    PlannerConfig pc = planner_config(ctx, lm.meta);
    pc.variant = variant.kind;
    const double lambda_logged =
        variant.kind == PlanVariant::NoCg ? 0.0 : pc.guidance.lambda;
    const double w_logged = variant.kind == PlanVariant::NoCfg ? 0.0 : pc.guidance.w;
    for (int k = 0; k < kEvalSeeds; ++k) {
      const auto records =
          evaluate(spec, models, pc, schedule, cfg.episodes, eval_seed(cfg, k));
      const auto m = normalized_metrics(records, ref, cfg.limit);
      csv.row({variant.name, format_double(lambda_logged), format_double(w_logged),
               std::to_string(k), format_double(m.normalized_reward),
               format_double(m.normalized_cost), format_double(m.mean_return),
               format_double(m.mean_cost)});
    }
  }
  csv.close();
  return 0;
}

// --- diagnose ------------------------------------------------------------------

std::vector<std::vector<double>> state_pool(const Dataset& ds) {
  std::vector<std::vector<double>> pool;
  for (const auto& ep : ds.episodes()) {
    for (const auto& s : ep.states) pool.push_back(s);
  }
  return pool;
}

int cmd_diagnose(const Context& ctx, const fs::path& ckpt_dir,
                 const fs::path& data_path, const std::string& which,
                 int n_trials) {
  const RunConfig& cfg = ctx.cfg;
  const LoadedModels lm = load_models(ctx, ckpt_dir);
  Dataset ds = load_dataset_for(cfg, data_path);
  const EnvSpec spec = cfg.env_spec();

  if (which == "drift" || which == "alignment") {
    DriftSetup setup;
    setup.schedule = &lm.sched;
    setup.denoiser = &lm.den;
    setup.reward_raw = &lm.reward_raw;
    setup.reward_ftr = &lm.reward_ftr;
    setup.limit = cfg.limit;
    setup.c_max_seg = lm.meta.c_max_seg;
    setup.guidance = cfg.guidance(lm.meta.r_us);
    const auto pool = state_pool(ds);
    if (which == "drift") {
      const auto report = coupled_drift_experiment(setup, spec, pool, n_trials,
                                                   mix_seed(cfg.seed, 0xDF));
      CsvWriter csv(ctx.out / ("drift_" + ctx.hash + ".csv"),
                    {"trial", "cost_cond", "cost_raw", "cost_ftr", "delta_raw",
                     "delta_ftr"},
                    ctx.hash, cfg.seed);
      for (std::size_t i = 0; i < report.trials.size(); ++i) {
        const auto& t = report.trials[i];
        csv.row({std::to_string(i), format_double(t.cost_cond),
                 format_double(t.cost_raw), format_double(t.cost_ftr),
                 format_double(t.delta_raw()), format_double(t.delta_ftr())});
      }
      csv.close();
      json j{{"n_trials", n_trials},
             {"mean_delta_raw", report.mean_delta_raw},
             {"mean_delta_ftr", report.mean_delta_ftr},
             {"se_delta_raw", report.se_delta_raw},
             {"se_delta_ftr", report.se_delta_ftr},
             {"sign_test_p", report.sign_test_p},
             {"n_positive", report.n_positive},
             {"n_nonzero", report.n_nonzero},
             {"config_hash", ctx.hash},
             {"seed", cfg.seed},
             {"code_version", kCodeVersion}};
      write_text_file(ctx.out / ("drift_" + ctx.hash + ".summary.json"),
                      j.dump(2) + "\n");
      std::cout << "drift: mean dC_raw " << format_double(report.mean_delta_raw)
                << "  mean dC_ftr " << format_double(report.mean_delta_ftr)
                << "  sign-test p " << format_double(report.sign_test_p) << "\n";
      return 0;
    }
    const auto report =
        estimate_alignment(setup, spec, pool, n_trials, mix_seed(cfg.seed, 0xAF));
    CsvWriter csv(ctx.out / ("alignment_" + ctx.hash + ".csv"),
                  {"trial", "s", "a_s"}, ctx.hash, cfg.seed);
    for (std::size_t i = 0; i < report.trials.size(); ++i) {
      for (std::size_t s = 0; s < report.trials[i].a_s.size(); ++s) {
        csv.row({std::to_string(i), std::to_string(s + 1),
                 format_double(report.trials[i].a_s[s])});
      }
    }
    csv.close();
    json j{{"n_trials", n_trials},
           {"mean_a_f", report.mean_a_f},
           {"frac_positive", report.frac_positive},
           {"config_hash", ctx.hash},
           {"seed", cfg.seed},
           {"code_version", kCodeVersion}};
    write_text_file(ctx.out / ("alignment_" + ctx.hash + ".summary.json"),
                    j.dump(2) + "\n");
    std::cout << "alignment: mean A_f " << format_double(report.mean_a_f)
              << "  frac positive " << format_double(report.frac_positive) << "\n";
    return 0;
  }
  if (which == "correlation") {
    const auto curve = cost_classifier_correlation(lm.cost, ds, lm.sched,
                                                   mix_seed(cfg.seed, 0xCF));
    CsvWriter csv(ctx.out / ("correlation_" + ctx.hash + ".csv"),
                  {"s", "pearson_r", "defined"}, ctx.hash, cfg.seed);
    for (std::size_t s = 0; s < curve.r.size(); ++s) {
      csv.row({std::to_string(s + 1),
               curve.defined[s] ? format_double(curve.r[s]) : "",
               curve.defined[s] ? "1" : "0"});
    }
    csv.close();
    const double rho = spearman_against_step(curve);
    json j{{"spearman_r_vs_s", rho},
           {"config_hash", ctx.hash},
           {"seed", cfg.seed},
           {"code_version", kCodeVersion}};
    write_text_file(ctx.out / ("correlation_" + ctx.hash + ".summary.json"),
                    j.dump(2) + "\n");
    std::cout << "correlation: spearman(r, s) " << format_double(rho) << "\n";
    return 0;
  }
  if (which == "rollout") {
    TrainConfig dyn_cfg = train_config(cfg, 0xB1);
    dyn_cfg.steps = std::min(dyn_cfg.steps, 4000);
    nn::NetSpec dyn_net;
    dyn_net.hidden = {64, 64};
    auto [dspec, dparams] = train_dynamics_model(ds, dyn_net, dyn_cfg, nullptr);
    const auto fn = make_dynamics_fn(dspec, dparams);
    const std::vector<int> horizons{4, 8, 16, 32};
    const auto rows = rollout_error_experiment(fn, lm.sched, lm.den, ds, horizons,
                                               mix_seed(cfg.seed, 0xB2));
    CsvWriter csv(ctx.out / ("rollout_" + ctx.hash + ".csv"),
                  {"horizon", "autoregressive_error", "joint_error"}, ctx.hash,
                  cfg.seed);
    for (const auto& r : rows) {
      csv.row({std::to_string(r.horizon), format_double(r.autoregressive),
               format_double(r.joint)});
    }
    csv.close();
    json j{{"horizons", horizons},
           {"config_hash", ctx.hash},
           {"seed", cfg.seed},
           {"code_version", kCodeVersion}};
    write_text_file(ctx.out / ("rollout_" + ctx.hash + ".summary.json"),
                    j.dump(2) + "\n");
    for (const auto& r : rows) {
      std::cout << "h " << r.horizon << ": autoregressive "
                << format_double(r.autoregressive) << "  joint "
                << format_double(r.joint) << "\n";
    }
    return 0;
  }
  throw std::invalid_argument("unknown diagnostic '" + which +
                              "' (expected drift, alignment, correlation, rollout)");
}

}  // namespace sdgd::cli

int main(int argc, char** argv) {
  using namespace sdgd;
  using namespace sdgd::cli;

  CLI::App app{"safe decoupled guidance diffusion planner"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<long long> seed_override;
  std::string out_dir = "out";
  app.add_option("--config", config_path, "run configuration file")->required();
  app.add_option("--seed", seed_override, "override the config seed");
  app.add_option("--out", out_dir, "output directory");

  auto* gen = app.add_subcommand("gen-data", "generate the offline dataset");
  std::string data_out;
  gen->add_option("--data-out", data_out, "dataset path (default <out>/dataset.bin)");

  auto* train = app.add_subcommand("train", "train denoiser and classifiers");
  std::string train_data;
  train->add_option("--data", train_data, "dataset path")->required();

  auto* eval = app.add_subcommand("eval", "evaluate the planner");
  std::string eval_ckpt;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint directory")->required();

  auto* sweep = app.add_subcommand("sweep", "sweep an axis without retraining");
  std::string sweep_ckpt, sweep_axis, sweep_values, sweep_data;
  sweep->add_option("--ckpt", sweep_ckpt, "checkpoint directory")->required();
  sweep->add_option("--axis", sweep_axis, "limit, lambda-w, or f")->required();
  sweep->add_option("--values", sweep_values, "comma-separated axis values");
  sweep->add_option("--data", sweep_data, "dataset path (f axis only)");

  auto* ablate = app.add_subcommand("ablate", "guidance-component ablations");
  std::string ablate_ckpt, ablate_data;
  ablate->add_option("--ckpt", ablate_ckpt, "checkpoint directory")->required();
  ablate->add_option("--data", ablate_data, "dataset path (for the swapped baseline)");

  auto* diagnose = app.add_subcommand("diagnose", "analysis experiments");
  std::string diag_ckpt, diag_data, diag_which;
  int diag_trials = 100;
  diagnose->add_option("--ckpt", diag_ckpt, "checkpoint directory")->required();
  diagnose->add_option("--data", diag_data, "dataset path")->required();
  diagnose->add_option("--which", diag_which, "drift, alignment, correlation, rollout")
      ->required();
  diagnose->add_option("--trials", diag_trials, "trial count for drift/alignment");

  CLI11_PARSE(app, argc, argv);

  try {
    Context ctx;
    ctx.cfg = load_config(config_path);
    if (seed_override.has_value()) {
      ctx.cfg.seed = static_cast<std::uint64_t>(*seed_override);
    }
    ctx.hash = config_hash(dump_config(ctx.cfg), ctx.cfg.seed);
    ctx.out = out_dir;
    std::filesystem::create_directories(ctx.out);

    if (gen->parsed()) {
      const fs::path out = data_out.empty() ? ctx.out / "dataset.bin" : fs::path(data_out);
      return cmd_gen_data(ctx, out);
    }
    if (train->parsed()) return cmd_train(ctx, train_data);
    if (eval->parsed()) return cmd_eval(ctx, eval_ckpt);
    if (sweep->parsed()) {
      std::optional<fs::path> data;
      if (!sweep_data.empty()) data = sweep_data;
      return cmd_sweep(ctx, sweep_ckpt, sweep_axis, sweep_values, data);
    }
    if (ablate->parsed()) {
      std::optional<fs::path> data;
      if (!ablate_data.empty()) data = ablate_data;
      return cmd_ablate(ctx, ablate_ckpt, data);
    }
    if (diagnose->parsed()) {
      return cmd_diagnose(ctx, diag_ckpt, diag_data, diag_which, diag_trials);
    }
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
}
