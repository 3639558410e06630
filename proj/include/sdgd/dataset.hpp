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

#ifndef SDGD_DATASET_HPP_
#define SDGD_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdgd/env.hpp"
#include "sdgd/rng.hpp"

namespace sdgd {

// Fixed-horizon trajectory slice; the diffusion sample space. flat() yields
// the interleaved [state..., action...] layout per timestep that the models
// consume; rewards and costs are labels, not part of the sample space.
struct Segment {
  int length = 0;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> states;   // length * state_dim, row-major
  std::vector<double> actions;  // length * action_dim
  std::vector<double> rewards;  // length
  std::vector<double> costs;    // length

  int flat_dim() const { return length * (state_dim + action_dim); }
  std::vector<double> flat() const;
  // Inverse of flat() for the states/actions part; rewards/costs are zero.
  static Segment from_flat(std::span<const double> flat, int length,
                           int state_dim, int action_dim);
};

struct SegmentLabels {
  double ret = 0.0;    // discounted return R
  double cost = 0.0;   // discounted cumulative cost C
  int h_f = 0;         // prefix-infeasibility indicator
  double r_hat = 0.0;  // FTR target R + r_us * h_f
};

struct DatasetStats {
  double r_min = 0.0, r_max = 0.0;  // per-step reward extrema over the dataset
  double c_max_seg = 0.0;           // max segment cost
  std::vector<double> mean;   // per dimension, state dims then action dims
  std::vector<double> stdev;  // floored at 1e-6
  double gamma = 1.0;
  double gamma_c = 1.0;
  int horizon = 0;  // planning horizon L
  int state_dim = 0;
  int action_dim = 0;
};

// Cost-limit condition; null means the unconditional token.
struct Condition {
  bool is_null = true;
  double limit = 0.0;  // raw cost units when !is_null
};

struct ConditionedBatch {
  std::vector<std::vector<double>> segments;  // normalized flat views
  std::vector<Condition> conditions;
  std::vector<std::size_t> indices;  // dataset segment indices
};

// --- Labeling operations -------------------------------------------------

std::vector<Segment> segment_episodes(const std::vector<Episode>& episodes,
                                      int horizon, int stride);

double compute_return(const Segment& seg, double gamma);
double compute_cost(const Segment& seg, double gamma_c);
int prefix_infeasible(const Segment& seg, int feasible_len);
double ftr_relabel(double ret, int h_f, double r_us);

// Strict upper bound B = (r_min - r_max) * G(gamma, L); callers must pick
// r_us < B. G(1, L) = L.
double r_us_bound(double r_min, double r_max, double gamma, int horizon);
// B scaled by 1.05 (more negative); -1 when the bound degenerates to zero.
double default_r_us(double r_min, double r_max, double gamma, int horizon);

// --- Normalization --------------------------------------------------------

std::vector<double> normalize_flat(const DatasetStats& stats,
                                   std::span<const double> flat);
std::vector<double> denormalize_flat(const DatasetStats& stats,
                                     std::span<const double> flat);
// Expand the per-dimension stats to the full flat layout (length L*(sd+ad)).
void expand_stats(const DatasetStats& stats, std::vector<double>& mean_out,
                  std::vector<double>& std_out);

// --- Dataset --------------------------------------------------------------

struct LabelConfig {
  int horizon = 32;
  int stride = 4;
  double gamma = 1.0;
  double gamma_c = 1.0;
  int feasible_len = 8;
  std::optional<double> r_us;  // nullopt resolves via default_r_us
};

class Dataset {
 public:
  static Dataset build(std::vector<Episode> episodes, const EnvSpec& spec,
                       const LabelConfig& cfg);

  const EnvSpec& env_spec() const { return spec_; }
  const std::vector<Episode>& episodes() const { return episodes_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<SegmentLabels>& labels() const { return labels_; }
  const DatasetStats& stats() const { return stats_; }
  double r_us() const { return r_us_; }
  int feasible_len() const { return feasible_len_; }

  // Labels recomputed for a different feasible length (f sweep); r_us
  // nullopt keeps the dataset default.
  std::vector<SegmentLabels> relabel(int feasible_len,
                                     std::optional<double> r_us) const;

  // Stratified conditional draw: limit uniform over a 32-point grid of
  // [0, c_max_seg], then a uniform segment among those with C <= limit
  // (empty grid cells are redrawn); the condition is dropped to null with
  // probability p_uncond. Draw order per slot: grid index, [feasible pick],
  // then the dropout uniform.
  ConditionedBatch sample_conditioned_batch(int batch_size, double p_uncond,
                                            Rng& rng) const;

  double max_episode_return() const;  // undiscounted, over raw episodes

 private:
  EnvSpec spec_{};
  std::vector<Episode> episodes_;
  std::vector<Segment> segments_;
  std::vector<SegmentLabels> labels_;
  DatasetStats stats_{};
  double r_us_ = -1.0;
  int feasible_len_ = 8;
  std::vector<std::size_t> by_cost_;        // segment indices sorted by C
  std::vector<std::size_t> grid_counts_;    // feasible-set size per grid point
  std::vector<double> grid_;                // the 32 limit grid points
};

inline constexpr int kLimitGridSize = 32;

// --- Serialization (episodes + metadata) ----------------------------------
//
// File = 8-byte magic "SDGDDS01", one JSON header line, then little-endian
// f32 rows [state..., action..., reward, cost] per step with each episode's
// final state appended after its last step row.

struct DatasetFileMeta {
  std::string env_id;
  int state_dim = 0;
  int action_dim = 0;
  int episode_len = 0;
  int n_episodes = 0;
  double gamma = 1.0;
  double gamma_c = 1.0;
};

void save_dataset(const std::filesystem::path& path,
                  const std::vector<Episode>& episodes,
                  const DatasetFileMeta& meta);
std::pair<std::vector<Episode>, DatasetFileMeta> load_dataset(
    const std::filesystem::path& path);

}  // namespace sdgd

#endif  // SDGD_DATASET_HPP_
