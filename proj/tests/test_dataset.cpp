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

#include <cmath>
#include <stdexcept>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "sdgd/dataset.hpp"
#include "sdgd/env.hpp"

using namespace sdgd;

namespace {

std::vector<Episode> mixed_episodes(const EnvSpec& spec, int n, std::uint64_t seed) {
  std::vector<Episode> eps;
  for (int i = 0; i < n; ++i) {
    const PolicyId pol = i % 5 < 2   ? PolicyId::Safe
                         : i % 5 < 4 ? PolicyId::Random
                                     : PolicyId::Greedy;
    eps.push_back(rollout(spec, pol, mix_seed(seed, i)));
  }
  return eps;
}

Segment make_segment(std::vector<double> rewards, std::vector<double> costs) {
  Segment seg;
  seg.length = static_cast<int>(rewards.size());
  seg.state_dim = 1;
  seg.action_dim = 1;
  seg.states.assign(seg.length, 0.0);
  seg.actions.assign(seg.length, 0.0);
  seg.rewards = std::move(rewards);
  seg.costs = std::move(costs);
  return seg;
}

}  // namespace

TEST_SUITE_BEGIN("dataset");

TEST_CASE("segment window counts") {
  const auto cv = make_env_spec(EnvId::ChainVel1D);
  std::vector<Episode> one{rollout(cv, PolicyId::Safe, 1)};
  CHECK(segment_episodes(one, 32, 16).size() == 3);
  CHECK(segment_episodes(one, 64, 1).size() == 1);
  std::vector<Episode> two{one[0], one[0]};
  const auto segs = segment_episodes(two, 32, 32);
  CHECK(segs.size() == 4);
  CHECK(segs[0].states == segs[2].states);
  CHECK(segs[1].actions == segs[3].actions);
  CHECK_THROWS_AS(segment_episodes(one, 65, 1), std::invalid_argument);
}

TEST_CASE("compute_return against direct summation") {
  CHECK(compute_return(make_segment({0, 0, 0}, {0, 0, 0}), 0.9) == 0.0);
  CHECK(compute_return(make_segment(std::vector<double>(10, 1.0),
                                    std::vector<double>(10, 0.0)),
                       1.0) == doctest::Approx(10.0));
  CHECK(compute_return(make_segment({1, 0, 2}, {0, 0, 0}), 0.5) ==
        doctest::Approx(1.5));
}

TEST_CASE("compute_cost against direct summation") {
  CHECK(compute_cost(make_segment({0, 0}, {0, 0}), 1.0) == 0.0);
  CHECK(compute_cost(make_segment(std::vector<double>(32, 0.0),
                                  std::vector<double>(32, 1.0)),
                     1.0) == doctest::Approx(32.0));
  CHECK(compute_cost(make_segment({0, 0, 0, 0}, {1, 1, 0, 1}), 0.9) ==
        doctest::Approx(1.0 + 0.9 + 0.0 + 0.729));
}

TEST_CASE("labels agree with brute-force re-summation on random segments") {
  const auto cv = make_env_spec(EnvId::ChainVel1D);
  auto ds = Dataset::build(mixed_episodes(cv, 40, 5), cv, LabelConfig{});
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t i = rng.uniform_index(ds.segments().size());
    const auto& seg = ds.segments()[i];
    double r = 0.0, c = 0.0, g = 1.0;
    for (int t = 0; t < seg.length; ++t) {
      r += g * seg.rewards[t];
      c += seg.costs[t];  // gamma_c = 1
      g *= 1.0;           // gamma = 1
    }
    CHECK(ds.labels()[i].ret == doctest::Approx(r).epsilon(1e-12));
    CHECK(ds.labels()[i].cost == doctest::Approx(c).epsilon(1e-12));
  }
}

TEST_CASE("prefix infeasibility") {
  auto seg = make_segment({0, 0, 0, 0}, {0, 0, 1, 0});
  CHECK(prefix_infeasible(seg, 2) == 0);
  CHECK(prefix_infeasible(seg, 3) == 1);
  CHECK(prefix_infeasible(make_segment({0, 0}, {0, 0}), 2) == 0);
  CHECK_THROWS_AS(prefix_infeasible(seg, 0), std::invalid_argument);
  CHECK_THROWS_AS(prefix_infeasible(seg, 5), std::invalid_argument);
}

TEST_CASE("monotone infeasibility in f") {
  const auto cv = make_env_spec(EnvId::ChainVel1D);
  auto ds = Dataset::build(mixed_episodes(cv, 20, 7), cv, LabelConfig{});
  for (const auto& seg : ds.segments()) {
    int prev = 0;
    for (int f = 1; f <= seg.length; ++f) {
      const int h = prefix_infeasible(seg, f);
      CHECK(h >= prev);
      prev = h;
    }
  }
}

TEST_CASE("ftr relabeling") {
  CHECK(ftr_relabel(5.0, 0, -40.0) == 5.0);
  CHECK(ftr_relabel(5.0, 1, -40.0) == -35.0);
  CHECK(ftr_relabel(0.0, 1, -10.0) == -10.0);
  CHECK_THROWS_AS(ftr_relabel(1.0, 0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ftr_relabel(1.0, 0, 2.0), std::invalid_argument);
}

TEST_CASE("r_us bound values") {
  CHECK(r_us_bound(0.0, 1.0, 1.0, 10) == doctest::Approx(-10.0));
  // geometric series evaluated independently in extended precision
  long double g = 0.0L, p = 1.0L;
  for (int t = 0; t < 50; ++t) {
    g += p;
    p *= 0.99L;
  }
  CHECK(r_us_bound(0.0, 1.0, 0.99, 50) ==
        doctest::Approx(-static_cast<double>(g)).epsilon(1e-12));
  CHECK(r_us_bound(0.0, 1.0, 0.99, 50) == doctest::Approx(-39.499).epsilon(1e-4));
  CHECK(r_us_bound(1.0, 1.0, 0.9, 5) == 0.0);
  CHECK(default_r_us(1.0, 1.0, 0.9, 5) < 0.0);
  CHECK(default_r_us(0.0, 1.0, 1.0, 10) == doctest::Approx(-10.5));
}

TEST_CASE("label separation holds with the default r_us margin") {
  for (EnvId id : {EnvId::ChainVel1D, EnvId::PointHazard2D}) {
    const auto spec = make_env_spec(id);
    auto ds = Dataset::build(mixed_episodes(spec, 30, 11), spec, LabelConfig{});
    double max_infeasible = -1e300, min_feasible = 1e300;
    bool any_inf = false, any_feas = false;
    for (const auto& lab : ds.labels()) {
      if (lab.h_f == 1) {
        max_infeasible = std::max(max_infeasible, lab.r_hat);
        any_inf = true;
      } else {
        min_feasible = std::min(min_feasible, lab.r_hat);
        any_feas = true;
      }
    }
    REQUIRE(any_inf);
    REQUIRE(any_feas);
    CHECK(max_infeasible < min_feasible);
  }
}

TEST_CASE("conditioned batches respect their limits") {
  const auto cv = make_env_spec(EnvId::ChainVel1D);
  auto ds = Dataset::build(mixed_episodes(cv, 30, 3), cv, LabelConfig{});
  Rng rng(17);
  int nulls = 0, conds = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const auto batch = ds.sample_conditioned_batch(64, 0.25, rng);
    REQUIRE(batch.segments.size() == 64);
    for (std::size_t i = 0; i < batch.conditions.size(); ++i) {
      if (batch.conditions[i].is_null) {
        ++nulls;
        continue;
      }
      ++conds;
      CHECK(ds.labels()[batch.indices[i]].cost <= batch.conditions[i].limit);
    }
  }
  CHECK(nulls > 0);
  CHECK(conds > 0);
  // p_uncond = 1 drops every condition
  const auto all_null = ds.sample_conditioned_batch(32, 1.0, rng);
  for (const auto& c : all_null.conditions) CHECK(c.is_null);
}

TEST_CASE("conditioning with a two-segment dataset only draws the feasible one") {
  // Build from safe episodes (all C = 0) plus one greedy (high C); a limit
  // strictly between them can only draw zero-cost segments.
  const auto cv = make_env_spec(EnvId::ChainVel1D);
  std::vector<Episode> eps{rollout(cv, PolicyId::Safe, 1),
                           rollout(cv, PolicyId::Greedy, 2)};
  LabelConfig lc;
  lc.stride = 32;
  auto ds = Dataset::build(eps, cv, lc);
  Rng rng(5);
  const auto batch = ds.sample_conditioned_batch(256, 0.0, rng);
  for (std::size_t i = 0; i < batch.conditions.size(); ++i) {
    REQUIRE(!batch.conditions[i].is_null);
    CHECK(ds.labels()[batch.indices[i]].cost <= batch.conditions[i].limit);
  }
}

TEST_CASE("normalization round-trips and floors constant dimensions") {
  const auto cv = make_env_spec(EnvId::ChainVel1D);
  auto ds = Dataset::build(mixed_episodes(cv, 10, 23), cv, LabelConfig{});
  const auto& seg = ds.segments()[3];
  const auto flat = seg.flat();
  const auto norm = normalize_flat(ds.stats(), flat);
  const auto back = denormalize_flat(ds.stats(), norm);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    CHECK(back[i] == doctest::Approx(flat[i]).epsilon(1e-6));
  }
  // identity stats = identity map
  DatasetStats id = ds.stats();
  std::fill(id.mean.begin(), id.mean.end(), 0.0);
  std::fill(id.stdev.begin(), id.stdev.end(), 1.0);
  CHECK(normalize_flat(id, flat) == flat);
  // constant dimension normalizes to zero with the floor
  std::vector<Episode> flat_eps{rollout(cv, PolicyId::Safe, 1)};
  for (auto& s : flat_eps[0].states) s[0] = 0.3;
  for (auto& a : flat_eps[0].actions) a[0] = 0.0;
  auto dsc = Dataset::build(flat_eps, cv, LabelConfig{});
  CHECK(dsc.stats().stdev[0] == doctest::Approx(1e-6));
  const auto cn = normalize_flat(dsc.stats(), dsc.segments()[0].flat());
  for (std::size_t i = 0; i < cn.size(); i += 2) CHECK(std::abs(cn[i]) < 1e-6);
}

TEST_CASE("flat view round-trips") {
  const auto ph = make_env_spec(EnvId::PointHazard2D);
  auto ds = Dataset::build(mixed_episodes(ph, 4, 2), ph, LabelConfig{});
  const auto& seg = ds.segments()[1];
  const auto flat = seg.flat();
  const auto back = Segment::from_flat(flat, seg.length, seg.state_dim, seg.action_dim);
  CHECK(back.states == seg.states);
  CHECK(back.actions == seg.actions);
}

TEST_CASE("dataset file round-trip and error paths") {
  const auto cv = make_env_spec(EnvId::ChainVel1D);
  auto eps = mixed_episodes(cv, 6, 31);
  DatasetFileMeta meta{"ChainVel1D", 1, 1, 64, 6, 1.0, 1.0};
  const auto tmp = std::filesystem::temp_directory_path() / "sdgd_ds_test.bin";
  save_dataset(tmp, eps, meta);
  auto [loaded, meta2] = load_dataset(tmp);
  REQUIRE(loaded.size() == eps.size());
  CHECK(meta2.env_id == meta.env_id);
  // payload round-trips bit-exactly at f32: saving the loaded episodes
  // reproduces the file byte for byte
  const auto tmp2 = std::filesystem::temp_directory_path() / "sdgd_ds_test2.bin";
  save_dataset(tmp2, loaded, meta2);
  std::ifstream a(tmp, std::ios::binary), b(tmp2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {});
  std::string sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);

  // wrong magic
  {
    std::ofstream f(tmp2, std::ios::binary);
    f << "WRONGMAG{\"env_id\":\"ChainVel1D\"}\n";
  }
  CHECK_THROWS(load_dataset(tmp2));
  // truncated payload
  {
    std::ifstream in(tmp, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), {});
    std::ofstream f(tmp2, std::ios::binary);
    f.write(all.data(), static_cast<std::streamsize>(all.size() - 16));
  }
  CHECK_THROWS(load_dataset(tmp2));
  std::filesystem::remove(tmp);
  std::filesystem::remove(tmp2);
}

TEST_CASE("relabel reuses cached returns") {
  const auto cv = make_env_spec(EnvId::ChainVel1D);
  auto ds = Dataset::build(mixed_episodes(cv, 10, 3), cv, LabelConfig{});
  const auto alt = ds.relabel(16, std::nullopt);
  REQUIRE(alt.size() == ds.labels().size());
  for (std::size_t i = 0; i < alt.size(); ++i) {
    CHECK(alt[i].ret == ds.labels()[i].ret);
    CHECK(alt[i].h_f == prefix_infeasible(ds.segments()[i], 16));
    CHECK(alt[i].r_hat == ftr_relabel(alt[i].ret, alt[i].h_f, ds.r_us()));
  }
}

TEST_SUITE_END();
