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

#include "sdgd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace sdgd {

namespace {
constexpr double kStdFloor = 1e-6;
}

std::vector<double> Segment::flat() const {
  std::vector<double> out(static_cast<std::size_t>(flat_dim()));
  const int row = state_dim + action_dim;
  for (int t = 0; t < length; ++t) {
    for (int j = 0; j < state_dim; ++j) {
      out[static_cast<std::size_t>(t) * row + j] =
          states[static_cast<std::size_t>(t) * state_dim + j];
    }
    for (int j = 0; j < action_dim; ++j) {
      out[static_cast<std::size_t>(t) * row + state_dim + j] =
          actions[static_cast<std::size_t>(t) * action_dim + j];
    }
  }
  return out;
}

Segment Segment::from_flat(std::span<const double> flat, int length,
                           int state_dim, int action_dim) {
  const int row = state_dim + action_dim;
  if (static_cast<int>(flat.size()) != length * row) {
    throw std::invalid_argument("dataset: flat view has wrong length");
  }
  Segment seg;
  seg.length = length;
  seg.state_dim = state_dim;
  seg.action_dim = action_dim;
  seg.states.resize(static_cast<std::size_t>(length) * state_dim);
  seg.actions.resize(static_cast<std::size_t>(length) * action_dim);
  seg.rewards.assign(length, 0.0);
  seg.costs.assign(length, 0.0);
  for (int t = 0; t < length; ++t) {
    for (int j = 0; j < state_dim; ++j) {
      seg.states[static_cast<std::size_t>(t) * state_dim + j] =
          flat[static_cast<std::size_t>(t) * row + j];
    }
    for (int j = 0; j < action_dim; ++j) {
      seg.actions[static_cast<std::size_t>(t) * action_dim + j] =
          flat[static_cast<std::size_t>(t) * row + state_dim + j];
    }
  }
  return seg;
}

std::vector<Segment> segment_episodes(const std::vector<Episode>& episodes,
                                      int horizon, int stride) {
  if (stride < 1) throw std::invalid_argument("dataset: stride must be >= 1");
  std::vector<Segment> out;
  for (const auto& ep : episodes) {
    const int T = static_cast<int>(ep.actions.size());
    if (horizon > T) {
      throw std::invalid_argument("dataset: horizon exceeds episode length");
    }
    const int sd = static_cast<int>(ep.states[0].size());
    const int ad = static_cast<int>(ep.actions[0].size());
    for (int i = 0; i + horizon <= T; i += stride) {
      Segment seg;
      seg.length = horizon;
      seg.state_dim = sd;
      seg.action_dim = ad;
      seg.states.reserve(static_cast<std::size_t>(horizon) * sd);
      seg.actions.reserve(static_cast<std::size_t>(horizon) * ad);
      for (int t = i; t < i + horizon; ++t) {
        seg.states.insert(seg.states.end(), ep.states[t].begin(), ep.states[t].end());
        seg.actions.insert(seg.actions.end(), ep.actions[t].begin(), ep.actions[t].end());
        seg.rewards.push_back(ep.rewards[t]);
        seg.costs.push_back(ep.costs[t]);
      }
      out.push_back(std::move(seg));
    }
  }
  return out;
}

double compute_return(const Segment& seg, double gamma) {
  if (gamma <= 0.0 || gamma > 1.0) {
    throw std::invalid_argument("dataset: gamma must be in (0,1]");
  }
  double acc = 0.0;
  double g = 1.0;
  for (int t = 0; t < seg.length; ++t) {
    acc += g * seg.rewards[t];
    g *= gamma;
  }
  return acc;
}

double compute_cost(const Segment& seg, double gamma_c) {
  if (gamma_c <= 0.0 || gamma_c > 1.0) {
    throw std::invalid_argument("dataset: gamma_c must be in (0,1]");
  }
  double acc = 0.0;
  double g = 1.0;
  for (int t = 0; t < seg.length; ++t) {
    acc += g * seg.costs[t];
    g *= gamma_c;
  }
  return acc;
}

int prefix_infeasible(const Segment& seg, int feasible_len) {
  if (feasible_len < 1 || feasible_len > seg.length) {
    throw std::invalid_argument("dataset: feasible length out of range");
  }
  double acc = 0.0;
  for (int t = 0; t < feasible_len; ++t) acc += seg.costs[t];
  return acc > 0.0 ? 1 : 0;
}

double ftr_relabel(double ret, int h_f, double r_us) {
  if (r_us >= 0.0) throw std::invalid_argument("dataset: r_us must be negative");
  return ret + r_us * static_cast<double>(h_f);
}

double r_us_bound(double r_min, double r_max, double gamma, int horizon) {
  if (r_min > r_max) throw std::invalid_argument("dataset: r_min > r_max");
  const double G = gamma == 1.0
                       ? static_cast<double>(horizon)
                       : (1.0 - std::pow(gamma, horizon)) / (1.0 - gamma);
  return (r_min - r_max) * G;
}

double default_r_us(double r_min, double r_max, double gamma, int horizon) {
  const double b = r_us_bound(r_min, r_max, gamma, horizon);
  if (b >= 0.0) return -1.0;  // degenerate constant-reward dataset
  return 1.05 * b;
}

void expand_stats(const DatasetStats& stats, std::vector<double>& mean_out,
                  std::vector<double>& std_out) {
  const int row = stats.state_dim + stats.action_dim;
  mean_out.resize(static_cast<std::size_t>(stats.horizon) * row);
  std_out.resize(mean_out.size());
  for (int t = 0; t < stats.horizon; ++t) {
    for (int j = 0; j < row; ++j) {
      mean_out[static_cast<std::size_t>(t) * row + j] = stats.mean[j];
      std_out[static_cast<std::size_t>(t) * row + j] = stats.stdev[j];
    }
  }
}

std::vector<double> normalize_flat(const DatasetStats& stats,
                                   std::span<const double> flat) {
  const int row = stats.state_dim + stats.action_dim;
  std::vector<double> out(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const int j = static_cast<int>(i % row);
    out[i] = (flat[i] - stats.mean[j]) / stats.stdev[j];
  }
  return out;
}

std::vector<double> denormalize_flat(const DatasetStats& stats,
                                     std::span<const double> flat) {
  const int row = stats.state_dim + stats.action_dim;
  std::vector<double> out(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const int j = static_cast<int>(i % row);
    out[i] = flat[i] * stats.stdev[j] + stats.mean[j];
  }
  return out;
}

Dataset Dataset::build(std::vector<Episode> episodes, const EnvSpec& spec,
                       const LabelConfig& cfg) {
  if (episodes.empty()) throw std::invalid_argument("dataset: no episodes");
  Dataset ds;
  ds.spec_ = spec;
  ds.episodes_ = std::move(episodes);
  ds.segments_ = segment_episodes(ds.episodes_, cfg.horizon, cfg.stride);
  ds.feasible_len_ = cfg.feasible_len;

  DatasetStats st;
  st.gamma = cfg.gamma;
  st.gamma_c = cfg.gamma_c;
  st.horizon = cfg.horizon;
  st.state_dim = spec.state_dim;
  st.action_dim = spec.action_dim;
  st.r_min = std::numeric_limits<double>::infinity();
  st.r_max = -std::numeric_limits<double>::infinity();
  const int row = spec.state_dim + spec.action_dim;
  std::vector<double> sum(row, 0.0), sumsq(row, 0.0);
  std::size_t n_rows = 0;
  for (const auto& seg : ds.segments_) {
    for (int t = 0; t < seg.length; ++t) {
      st.r_min = std::min(st.r_min, seg.rewards[t]);
      st.r_max = std::max(st.r_max, seg.rewards[t]);
      for (int j = 0; j < spec.state_dim; ++j) {
        const double v = seg.states[static_cast<std::size_t>(t) * spec.state_dim + j];
        sum[j] += v;
        sumsq[j] += v * v;
      }
      for (int j = 0; j < spec.action_dim; ++j) {
        const double v = seg.actions[static_cast<std::size_t>(t) * spec.action_dim + j];
        sum[spec.state_dim + j] += v;
        sumsq[spec.state_dim + j] += v * v;
      }
      ++n_rows;
    }
  }
  st.mean.resize(row);
  st.stdev.resize(row);
  for (int j = 0; j < row; ++j) {
    st.mean[j] = sum[j] / static_cast<double>(n_rows);
    const double var =
        std::max(sumsq[j] / static_cast<double>(n_rows) - st.mean[j] * st.mean[j], 0.0);
    st.stdev[j] = std::max(std::sqrt(var), kStdFloor);
  }

  ds.r_us_ = cfg.r_us.value_or(
      default_r_us(st.r_min, st.r_max, cfg.gamma, cfg.horizon));
  if (ds.r_us_ >= 0.0) throw std::invalid_argument("dataset: resolved r_us must be negative");

  ds.labels_.reserve(ds.segments_.size());
  st.c_max_seg = 0.0;
  for (const auto& seg : ds.segments_) {
    SegmentLabels lab;
    lab.ret = compute_return(seg, cfg.gamma);
    lab.cost = compute_cost(seg, cfg.gamma_c);
    lab.h_f = prefix_infeasible(seg, cfg.feasible_len);
    lab.r_hat = ftr_relabel(lab.ret, lab.h_f, ds.r_us_);
    st.c_max_seg = std::max(st.c_max_seg, lab.cost);
    ds.labels_.push_back(lab);
  }
  ds.stats_ = st;

  // Sort once by cost; the feasible set of any limit is then a prefix.
  ds.by_cost_.resize(ds.segments_.size());
  std::iota(ds.by_cost_.begin(), ds.by_cost_.end(), std::size_t{0});
  std::stable_sort(ds.by_cost_.begin(), ds.by_cost_.end(),
                   [&](std::size_t a, std::size_t b) {
                     return ds.labels_[a].cost < ds.labels_[b].cost;
                   });
  ds.grid_.resize(kLimitGridSize);
  ds.grid_counts_.resize(kLimitGridSize);
  for (int gi = 0; gi < kLimitGridSize; ++gi) {
    const double l = st.c_max_seg * static_cast<double>(gi) /
                     static_cast<double>(kLimitGridSize - 1);
    ds.grid_[gi] = l;
    std::size_t lo = 0, hi = ds.by_cost_.size();
    while (lo < hi) {  // first index with cost > l
      const std::size_t mid = (lo + hi) / 2;
      if (ds.labels_[ds.by_cost_[mid]].cost <= l) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    ds.grid_counts_[gi] = lo;
  }
  return ds;
}

std::vector<SegmentLabels> Dataset::relabel(int feasible_len,
                                            std::optional<double> r_us) const {
  const double ru = r_us.value_or(r_us_);
  std::vector<SegmentLabels> out;
  out.reserve(segments_.size());
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    SegmentLabels lab = labels_[i];
    lab.h_f = prefix_infeasible(segments_[i], feasible_len);
    lab.r_hat = ftr_relabel(lab.ret, lab.h_f, ru);
    out.push_back(lab);
  }
  return out;
}

ConditionedBatch Dataset::sample_conditioned_batch(int batch_size,
                                                   double p_uncond,
                                                   Rng& rng) const {
  if (segments_.empty()) throw std::invalid_argument("dataset: empty dataset");
  if (p_uncond < 0.0 || p_uncond > 1.0) {
    throw std::invalid_argument("dataset: p_uncond must be in [0,1]");
  }
  ConditionedBatch batch;
  batch.segments.reserve(batch_size);
  batch.conditions.reserve(batch_size);
  batch.indices.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    int gi = static_cast<int>(rng.uniform_index(kLimitGridSize));
    int attempts = 0;
    while (grid_counts_[gi] == 0) {
      gi = static_cast<int>(rng.uniform_index(kLimitGridSize));
      if (++attempts > 10000) {
        throw std::runtime_error("dataset: no feasible segments for any grid limit");
      }
    }
    const std::size_t pick = rng.uniform_index(grid_counts_[gi]);
    const std::size_t idx = by_cost_[pick];
    Condition cond;
    if (rng.uniform01() < p_uncond) {
      cond.is_null = true;
    } else {
      cond.is_null = false;
      cond.limit = grid_[gi];
    }
    batch.segments.push_back(normalize_flat(stats_, segments_[idx].flat()));
    batch.conditions.push_back(cond);
    batch.indices.push_back(idx);
  }
  return batch;
}

double Dataset::max_episode_return() const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& ep : episodes_) {
    double r = 0.0;
    for (double v : ep.rewards) r += v;
    best = std::max(best, r);
  }
  return best;
}

void save_dataset(const std::filesystem::path& path,
                  const std::vector<Episode>& episodes,
                  const DatasetFileMeta& meta) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dataset: cannot open " + path.string() + " for writing");
  f.write("SDGDDS01", 8);
  nlohmann::json j{{"env_id", meta.env_id},
                   {"state_dim", meta.state_dim},
                   {"action_dim", meta.action_dim},
                   {"episode_len", meta.episode_len},
                   {"n_episodes", meta.n_episodes},
                   {"gamma", meta.gamma},
                   {"gamma_c", meta.gamma_c},
                   {"dtype", "f32le"}};
  const std::string hdr = j.dump() + "\n";
  f.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  std::vector<float> buf;
  for (const auto& ep : episodes) {
    for (std::size_t t = 0; t < ep.actions.size(); ++t) {
      for (double v : ep.states[t]) buf.push_back(static_cast<float>(v));
      for (double v : ep.actions[t]) buf.push_back(static_cast<float>(v));
      buf.push_back(static_cast<float>(ep.rewards[t]));
      buf.push_back(static_cast<float>(ep.costs[t]));
    }
    for (double v : ep.states.back()) buf.push_back(static_cast<float>(v));
  }
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw std::runtime_error("dataset: write failed for " + path.string());
}

std::pair<std::vector<Episode>, DatasetFileMeta> load_dataset(
    const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dataset: cannot open " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "SDGDDS01", 8) != 0) {
    throw std::runtime_error("dataset: bad magic in " + path.string());
  }
  std::string hdr;
  if (!std::getline(f, hdr)) throw std::runtime_error("dataset: missing header line");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(hdr);
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("dataset: malformed header in " + path.string());
  }
  DatasetFileMeta meta;
  meta.env_id = j.at("env_id").get<std::string>();
  meta.state_dim = j.at("state_dim").get<int>();
  meta.action_dim = j.at("action_dim").get<int>();
  meta.episode_len = j.at("episode_len").get<int>();
  meta.n_episodes = j.at("n_episodes").get<int>();
  meta.gamma = j.at("gamma").get<double>();
  meta.gamma_c = j.at("gamma_c").get<double>();
  if (j.at("dtype").get<std::string>() != "f32le") {
    throw std::runtime_error("dataset: unsupported dtype");
  }
  const EnvSpec spec = make_env_spec(parse_env_id(meta.env_id));
  if (meta.state_dim != spec.state_dim || meta.action_dim != spec.action_dim) {
    throw std::runtime_error("dataset: header dimensions do not match env");
  }
  const std::size_t per_step =
      static_cast<std::size_t>(meta.state_dim + meta.action_dim + 2);
  const std::size_t per_episode =
      per_step * meta.episode_len + meta.state_dim;
  const std::size_t total = per_episode * meta.n_episodes;
  std::vector<float> buf(total);
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(total * sizeof(float)));
  if (f.gcount() != static_cast<std::streamsize>(total * sizeof(float))) {
    throw std::runtime_error("dataset: truncated payload in " + path.string());
  }
  char extra;
  if (f.read(&extra, 1)) {
    throw std::runtime_error("dataset: payload longer than header implies");
  }
  std::vector<Episode> episodes(meta.n_episodes);
  std::size_t off = 0;
  for (auto& ep : episodes) {
    ep.states.resize(meta.episode_len + 1);
    ep.actions.resize(meta.episode_len);
    ep.rewards.resize(meta.episode_len);
    ep.costs.resize(meta.episode_len);
    for (int t = 0; t < meta.episode_len; ++t) {
      ep.states[t].resize(meta.state_dim);
      for (int k = 0; k < meta.state_dim; ++k) ep.states[t][k] = buf[off++];
      ep.actions[t].resize(meta.action_dim);
      for (int k = 0; k < meta.action_dim; ++k) ep.actions[t][k] = buf[off++];
      ep.rewards[t] = buf[off++];
      ep.costs[t] = buf[off++];
    }
    ep.states[meta.episode_len].resize(meta.state_dim);
    for (int k = 0; k < meta.state_dim; ++k) ep.states[meta.episode_len][k] = buf[off++];
  }
  return {std::move(episodes), meta};
}

}  // namespace sdgd
