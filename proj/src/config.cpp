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

#include "sdgd/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sdgd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("config: " + msg);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) fail("invalid number for key '" + key + "'");
    return d;
  } catch (const std::invalid_argument&) {
    fail("invalid number for key '" + key + "'");
  } catch (const std::out_of_range&) {
    fail("number out of range for key '" + key + "'");
  }
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) fail("invalid integer for key '" + key + "'");
    return d;
  } catch (const std::invalid_argument&) {
    fail("invalid integer for key '" + key + "'");
  } catch (const std::out_of_range&) {
    fail("integer out of range for key '" + key + "'");
  }
}

void parse_policy_mix(RunConfig& cfg, const std::string& value) {
  cfg.mix_safe = cfg.mix_greedy = cfg.mix_random = 0.0;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto colon = item.find(':');
    if (colon == std::string::npos) fail("policy_mix entries must be name:weight");
    const std::string name = trim(item.substr(0, colon));
    const double wgt = parse_double("policy_mix", trim(item.substr(colon + 1)));
    if (name == "safe") {
      cfg.mix_safe = wgt;
    } else if (name == "greedy") {
      cfg.mix_greedy = wgt;
    } else if (name == "random") {
      cfg.mix_random = wgt;
    } else {
      fail("unknown policy '" + name + "' in policy_mix");
    }
  }
}

}  // namespace

BudgetSchedule parse_schedule_text(const std::string& text, int episode_len) {
  BudgetSchedule sched;
  std::stringstream ss(text);
  std::string item;
  std::vector<std::pair<int, double>> entries;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto colon = item.find(':');
    if (colon == std::string::npos) fail("schedule entries must be start:limit");
    const int start = static_cast<int>(parse_int("schedule", trim(item.substr(0, colon))));
    const double limit = parse_double("schedule", trim(item.substr(colon + 1)));
    entries.emplace_back(start, limit);
  }
  if (entries.empty()) fail("schedule is empty");
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const int end = k + 1 < entries.size() ? entries[k + 1].first : episode_len;
    sched.segments.push_back({entries[k].first, entries[k].second,
                              end - entries[k].first});
  }
  sched.validate(episode_len);
  return sched;
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::string section;
  std::stringstream ss(text);
  std::string line;
  bool r_us_auto = true;
  while (std::getline(ss, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "env" && section != "data" && section != "diffusion" &&
          section != "guidance" && section != "planner" && section != "seed") {
        fail("unknown section '" + section + "'");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section == "env") {
      if (key == "env_id") {
        cfg.env_id = value;
      } else if (key == "T_ep") {
        cfg.episode_len = static_cast<int>(parse_int(key, value));
      } else {
        fail("unknown key '" + key + "' in [env]");
      }
    } else if (section == "data") {
      if (key == "n_episodes") {
        cfg.n_episodes = static_cast<int>(parse_int(key, value));
      } else if (key == "policy_mix") {
        parse_policy_mix(cfg, value);
      } else if (key == "L") {
        cfg.horizon = static_cast<int>(parse_int(key, value));
      } else if (key == "stride") {
        cfg.stride = static_cast<int>(parse_int(key, value));
      } else {
        fail("unknown key '" + key + "' in [data]");
      }
    } else if (section == "diffusion") {
      if (key == "N") {
        cfg.n_diffusion_steps = static_cast<int>(parse_int(key, value));
      } else if (key == "steps") {
        cfg.train_steps = static_cast<int>(parse_int(key, value));
      } else if (key == "lr") {
        cfg.lr = parse_double(key, value);
      } else if (key == "batch") {
        cfg.batch = static_cast<int>(parse_int(key, value));
      } else if (key == "p_uncond") {
        cfg.p_uncond = parse_double(key, value);
      } else {
        fail("unknown key '" + key + "' in [diffusion]");
      }
    } else if (section == "guidance") {
      if (key == "w") {
        cfg.w = parse_double(key, value);
      } else if (key == "lambda") {
        cfg.lambda = parse_double(key, value);
      } else if (key == "f") {
        cfg.feasible_len = static_cast<int>(parse_int(key, value));
      } else if (key == "r_us") {
        if (value == "auto") {
          r_us_auto = true;
        } else {
          r_us_auto = false;
          cfg.r_us = parse_double(key, value);
        }
      } else {
        fail("unknown key '" + key + "' in [guidance]");
      }
    } else if (section == "planner") {
      if (key == "limit") {
        cfg.limit = parse_double(key, value);
      } else if (key == "schedule") {
        cfg.schedule_text = value;
      } else if (key == "episodes") {
        cfg.episodes = static_cast<int>(parse_int(key, value));
      } else if (key == "mode") {
        if (value == "static") {
          cfg.mode = ConditionMode::Static;
        } else if (value == "decrement") {
          cfg.mode = ConditionMode::Decrement;
        } else {
          fail("mode must be 'static' or 'decrement'");
        }
      } else {
        fail("unknown key '" + key + "' in [planner]");
      }
    } else if (section == "seed") {
      if (key == "value") {
        cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
      } else {
        fail("unknown key '" + key + "' in [seed]");
      }
    } else {
      fail("key '" + key + "' outside any section");
    }
  }
  if (!r_us_auto && !cfg.r_us.has_value()) fail("r_us missing");

  // Invariant validation, naming the offending key.
  parse_env_id(cfg.env_id);  // throws on unknown ids
  if (cfg.episode_len < 1) fail("T_ep must be positive");
  if (cfg.n_episodes < 1) fail("n_episodes must be positive");
  const double mix = cfg.mix_safe + cfg.mix_greedy + cfg.mix_random;
  if (std::abs(mix - 1.0) > 1e-9) fail("policy_mix must sum to 1");
  if (cfg.mix_safe < 0 || cfg.mix_greedy < 0 || cfg.mix_random < 0) {
    fail("policy_mix weights must be >= 0");
  }
  if (cfg.horizon < 1 || cfg.horizon > cfg.episode_len) fail("L must be in [1, T_ep]");
  if (cfg.stride < 1) fail("stride must be >= 1");
  if (cfg.n_diffusion_steps < 1) fail("N must be >= 1");
  if (cfg.train_steps < 1) fail("steps must be >= 1");
  if (cfg.lr <= 0.0) fail("lr must be positive");
  if (cfg.batch < 1) fail("batch must be >= 1");
  if (cfg.p_uncond < 0.0 || cfg.p_uncond > 1.0) fail("p_uncond must be in [0,1]");
  if (cfg.w < 0.0) fail("w must be >= 0");
  if (cfg.lambda < 0.0) fail("lambda must be >= 0");
  if (cfg.feasible_len < 1 || cfg.feasible_len > cfg.horizon) fail("f must be in [1, L]");
  if (cfg.r_us.has_value() && *cfg.r_us >= 0.0) fail("r_us must be negative or 'auto'");
  if (cfg.limit < 0.0) fail("limit must be >= 0");
  if (cfg.episodes < 1) fail("episodes must be >= 1");
  if (cfg.schedule_text.has_value()) {
    parse_schedule_text(*cfg.schedule_text, cfg.episode_len);  // validates
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

EnvSpec RunConfig::env_spec() const {
  EnvSpec spec = make_env_spec(parse_env_id(env_id));
  spec.episode_len = episode_len;
  return spec;
}

BudgetSchedule RunConfig::budget_schedule() const {
  if (schedule_text.has_value()) {
    return parse_schedule_text(*schedule_text, episode_len);
  }
  return BudgetSchedule::single(limit, episode_len);
}

GuidanceConfig RunConfig::guidance(double resolved_r_us) const {
  GuidanceConfig g;
  g.w = w;
  g.lambda = lambda;
  g.feasible_len = feasible_len;
  g.r_us = r_us.value_or(resolved_r_us);
  g.p_uncond = p_uncond;
  g.validate(horizon);
  return g;
}

std::string dump_config(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "[env]\n"
     << "env_id = " << cfg.env_id << "\n"
     << "T_ep = " << cfg.episode_len << "\n"
     << "[data]\n"
     << "n_episodes = " << cfg.n_episodes << "\n"
     << "policy_mix = safe:" << cfg.mix_safe << ",greedy:" << cfg.mix_greedy
     << ",random:" << cfg.mix_random << "\n"
     << "L = " << cfg.horizon << "\n"
     << "stride = " << cfg.stride << "\n"
     << "[diffusion]\n"
     << "N = " << cfg.n_diffusion_steps << "\n"
     << "steps = " << cfg.train_steps << "\n"
     << "lr = " << cfg.lr << "\n"
     << "batch = " << cfg.batch << "\n"
     << "p_uncond = " << cfg.p_uncond << "\n"
     << "[guidance]\n"
     << "w = " << cfg.w << "\n"
     << "lambda = " << cfg.lambda << "\n"
     << "f = " << cfg.feasible_len << "\n"
     << "r_us = ";
  if (cfg.r_us.has_value()) {
    os << *cfg.r_us;
  } else {
    os << "auto";
  }
  os << "\n[planner]\n";
  if (cfg.schedule_text.has_value()) {
    os << "schedule = " << *cfg.schedule_text << "\n";
  } else {
    os << "limit = " << cfg.limit << "\n";
  }
  os << "episodes = " << cfg.episodes << "\n"
     << "mode = " << (cfg.mode == ConditionMode::Decrement ? "decrement" : "static")
     << "\n"
     << "[seed]\n"
     << "value = " << cfg.seed << "\n";
  return os.str();
}

}  // namespace sdgd
