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

#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "sdgd/config.hpp"
#include "sdgd/io.hpp"

using namespace sdgd;

namespace {

const char* kGoodConfig = R"(
[env]
env_id = ChainVel1D
T_ep = 64
[data]
n_episodes = 50
policy_mix = safe:0.4,greedy:0.3,random:0.3
L = 32
stride = 4
[diffusion]
N = 100
steps = 500
lr = 3e-4
batch = 64
p_uncond = 0.25
[guidance]
w = 4
lambda = 0.04
f = 8
r_us = auto
[planner]
limit = 2
episodes = 20
mode = decrement
[seed]
value = 7
)";

}  // namespace

TEST_SUITE_BEGIN("config_io");

TEST_CASE("config parses and dumps canonically") {
  const auto cfg = parse_config_text(kGoodConfig);
  CHECK(cfg.env_id == "ChainVel1D");
  CHECK(cfg.n_episodes == 50);
  CHECK(cfg.horizon == 32);
  CHECK(cfg.w == 4.0);
  CHECK(!cfg.r_us.has_value());
  CHECK(cfg.limit == 2.0);
  CHECK(cfg.seed == 7);
  // dump -> parse round-trips to the same canonical dump
  const auto text = dump_config(cfg);
  const auto cfg2 = parse_config_text(text);
  CHECK(dump_config(cfg2) == text);
}

TEST_CASE("unknown keys and sections are rejected by name") {
  std::string bad = kGoodConfig;
  bad += "\n[planner]\nwarp = 9\n";
  try {
    parse_config_text(bad);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("warp") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text("[rocket]\nx = 1\n"), std::invalid_argument);
}

TEST_CASE("invariant violations name the key") {
  auto expect_mentions = [](const std::string& text, const std::string& word) {
    try {
      parse_config_text(text);
      FAIL(("expected rejection mentioning " + word).c_str());
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find(word) != std::string::npos);
    }
  };
  std::string base = kGoodConfig;
  expect_mentions(base + "[guidance]\nw = -1\n", "w");
  expect_mentions(base + "[guidance]\nf = 64\n", "f");
  expect_mentions(base + "[guidance]\nr_us = 1.0\n", "r_us");
  expect_mentions(base + "[data]\npolicy_mix = safe:0.9,greedy:0.3,random:0.3\n",
                  "policy_mix");
  expect_mentions(base + "[diffusion]\np_uncond = 1.5\n", "p_uncond");
}

TEST_CASE("schedule text parsing") {
  const auto sched = parse_schedule_text("0:1,20:3,40:10", 64);
  REQUIRE(sched.segments.size() == 3);
  CHECK(sched.segments[0].limit == 1.0);
  CHECK(sched.segments[1].start == 20);
  CHECK(sched.segments[2].horizon == 24);
  CHECK_THROWS_AS(parse_schedule_text("5:1", 64), std::invalid_argument);
  CHECK_THROWS_AS(parse_schedule_text("0:1,20:-3", 64), std::invalid_argument);
}

TEST_CASE("config hash is stable and seed-sensitive") {
  const auto cfg = parse_config_text(kGoodConfig);
  const auto h1 = config_hash(dump_config(cfg), 7);
  const auto h2 = config_hash(dump_config(cfg), 7);
  const auto h3 = config_hash(dump_config(cfg), 8);
  CHECK(h1 == h2);
  CHECK(h1 != h3);
  CHECK(h1.size() == 16);
}

TEST_CASE("csv writer emits a header and a sidecar") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "sdgd_io_test.csv";
  {
    CsvWriter csv(path, {"a", "b"}, "deadbeef", 5);
    csv.row({format_double(1.5), format_double(-0.25)});
    CHECK_THROWS_AS(csv.row({"too", "many", "cells"}), std::invalid_argument);
    csv.close();
  }
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  CHECK(line == "a,b");
  std::getline(f, line);
  CHECK(line == "1.5,-0.25");
  std::ifstream meta(path.string() + ".meta.json");
  std::string all((std::istreambuf_iterator<char>(meta)), {});
  CHECK(all.find("deadbeef") != std::string::npos);
  CHECK(all.find(kCodeVersion) != std::string::npos);
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".meta.json");
}

TEST_CASE("format_double round-trips exactly") {
  for (double v : {0.1, -3.25, 1e-17, 12345.678901234567, 0.0}) {
    const auto s = format_double(v);
    CHECK(std::stod(s) == v);
  }
}

TEST_CASE("episode records serialize to json lines") {
  EpisodeRecord rec;
  rec.seed = 9;
  rec.total_reward = 1.5;
  rec.total_cost = 2.0;
  rec.segment_costs = {2.0};
  rec.episode.states = {{0.0}, {0.1}};
  rec.episode.actions = {{0.1}};
  rec.episode.rewards = {0.1};
  rec.episode.costs = {0.0};
  ReplanLog log;
  log.t = 0;
  log.plan = {0.0, 0.1};
  rec.replans.push_back(log);
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "sdgd_records_test.jsonl";
  write_episode_records(path, {rec, rec}, "cafe", 9);
  std::ifstream f(path);
  std::string l1, l2, l3;
  CHECK(static_cast<bool>(std::getline(f, l1)));
  CHECK(static_cast<bool>(std::getline(f, l2)));
  CHECK(!std::getline(f, l3));
  CHECK(l1 == l2);
  CHECK(l1.find("\"total_cost\":2.0") != std::string::npos);
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".meta.json");
}

TEST_SUITE_END();
