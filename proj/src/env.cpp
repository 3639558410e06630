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

#include "sdgd/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sdgd/rng.hpp"

namespace sdgd {

namespace {

constexpr int kEpisodeLen = 64;

// PointHazard2D constants.
constexpr double kGoalX = 0.8;
constexpr double kGoalY = 0.8;
constexpr double kHazardRadius = 0.35;
constexpr double kHazardClearance = 0.1;
// ChainVel1D constants.
constexpr double kVelThreshold = 0.6;
constexpr double kVelTrack = 0.55;
// Surrogate sharpness (diagnostics only, not used in training).
constexpr double kSurrogateK = 20.0;

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double dist2(double ax, double ay, double bx, double by) {
  return std::hypot(ax - bx, ay - by);
}

void check_state(const EnvSpec& spec, std::span<const double> state) {
  if (static_cast<int>(state.size()) != spec.state_dim) {
    throw std::invalid_argument("env: state dimension mismatch");
  }
  constexpr double kTol = 1e-9;
  if (spec.id == EnvId::PointHazard2D) {
    for (double v : state) {
      if (v < -1.0 - kTol || v > 1.0 + kTol) {
        throw std::invalid_argument("env: PointHazard2D state out of [-1,1]^2");
      }
    }
  } else {
    if (state[0] < -kTol || state[0] > 1.0 + kTol) {
      throw std::invalid_argument("env: ChainVel1D state out of [0,1]");
    }
  }
}

std::vector<double> policy_action(const EnvSpec& spec, PolicyId policy,
                                  std::span<const double> state, Rng& rng) {
  const double b = spec.action_bound;
  std::vector<double> a(spec.action_dim, 0.0);
  switch (policy) {
    case PolicyId::Random:
      for (auto& v : a) v = rng.uniform(-b, b);
      break;
    case PolicyId::Greedy:
      if (spec.id == EnvId::ChainVel1D) {
        a[0] = b;
      } else {
        const double dx = kGoalX - state[0];
        const double dy = kGoalY - state[1];
        const double n = std::hypot(dx, dy);
        if (n > 1e-9) {
          a[0] = b * dx / n;
          a[1] = b * dy / n;
        }
      }
      break;
    case PolicyId::Safe:
      if (spec.id == EnvId::ChainVel1D) {
        a[0] = clip(kVelTrack - state[0], -b, b);
      } else {
        const double dx = kGoalX - state[0];
        const double dy = kGoalY - state[1];
        const double n = std::hypot(dx, dy);
        if (n <= 1e-9) break;
        double ux = dx / n, uy = dy / n;
        double nx = clip(state[0] + b * ux, -1.0, 1.0);
        double ny = clip(state[1] + b * uy, -1.0, 1.0);
        const double keep_out = kHazardRadius + kHazardClearance;
        if (dist2(nx, ny, 0.0, 0.0) < keep_out) {
          // Deflect tangentially around the hazard; pick the tangent that
          // makes progress toward the goal, counterclockwise on ties.
          const double rn = std::max(std::hypot(state[0], state[1]), 1e-9);
          const double rx = state[0] / rn, ry = state[1] / rn;
          double tx = -ry, ty = rx;
          if (tx * ux + ty * uy < -1e-12) {
            tx = -tx;
            ty = -ty;
          }
          // Bias slightly outward when already inside the clearance band.
          if (rn < keep_out) {
            tx += 0.5 * rx;
            ty += 0.5 * ry;
            const double tn = std::max(std::hypot(tx, ty), 1e-9);
            tx /= tn;
            ty /= tn;
          }
          a[0] = b * tx;
          a[1] = b * ty;
        } else {
          a[0] = b * ux;
          a[1] = b * uy;
        }
      }
      break;
  }
  return a;
}

}  // namespace

EnvSpec make_env_spec(EnvId id) {
  if (id == EnvId::PointHazard2D) {
    return EnvSpec{id, 2, 2, kEpisodeLen, 0.1};
  }
  return EnvSpec{id, 1, 1, kEpisodeLen, 0.2};
}

EnvId parse_env_id(std::string_view name) {
  if (name == "PointHazard2D") return EnvId::PointHazard2D;
  if (name == "ChainVel1D") return EnvId::ChainVel1D;
  throw std::invalid_argument("env: unknown env_id '" + std::string(name) + "'");
}

std::string to_string(EnvId id) {
  return id == EnvId::PointHazard2D ? "PointHazard2D" : "ChainVel1D";
}

PolicyId parse_policy_id(std::string_view name) {
  if (name == "random") return PolicyId::Random;
  if (name == "greedy") return PolicyId::Greedy;
  if (name == "safe") return PolicyId::Safe;
  throw std::invalid_argument("env: unknown policy_id '" + std::string(name) + "'");
}

std::string to_string(PolicyId id) {
  switch (id) {
    case PolicyId::Random: return "random";
    case PolicyId::Greedy: return "greedy";
    default: return "safe";
  }
}

std::vector<double> reset(const EnvSpec& spec, std::uint64_t /*seed*/) {
  if (spec.id == EnvId::PointHazard2D) return {-0.8, -0.8};
  return {0.0};
}

StepResult step(const EnvSpec& spec, std::span<const double> state,
                std::span<const double> action) {
  check_state(spec, state);
  if (static_cast<int>(action.size()) != spec.action_dim) {
    throw std::invalid_argument("env: action dimension mismatch");
  }
  const double b = spec.action_bound;
  StepResult out;
  out.done = false;
  if (spec.id == EnvId::PointHazard2D) {
    const double ax = clip(action[0], -b, b);
    const double ay = clip(action[1], -b, b);
    const double nx = clip(state[0] + ax, -1.0, 1.0);
    const double ny = clip(state[1] + ay, -1.0, 1.0);
    out.next_state = {nx, ny};
    out.reward = dist2(state[0], state[1], kGoalX, kGoalY) -
                 dist2(nx, ny, kGoalX, kGoalY);
    out.cost = dist2(nx, ny, 0.0, 0.0) < kHazardRadius ? 1.0 : 0.0;
  } else {
    const double a = clip(action[0], -b, b);
    const double nv = clip(state[0] + a, 0.0, 1.0);
    out.next_state = {nv};
    out.reward = nv;
    out.cost = nv > kVelThreshold ? 1.0 : 0.0;
  }
  return out;
}

double smooth_cost(const EnvSpec& spec, std::span<const double> state) {
  check_state(spec, state);
  if (spec.id == EnvId::PointHazard2D) {
    const double r = std::hypot(state[0], state[1]);
    return sigmoid(kSurrogateK * (kHazardRadius - r));
  }
  return sigmoid(kSurrogateK * (state[0] - kVelThreshold));
}

std::vector<double> smooth_cost_grad(const EnvSpec& spec,
                                     std::span<const double> state) {
  check_state(spec, state);
  if (spec.id == EnvId::PointHazard2D) {
    const double r = std::hypot(state[0], state[1]);
    const double s = sigmoid(kSurrogateK * (kHazardRadius - r));
    if (r < 1e-12) return {0.0, 0.0};  // symmetric peak
    const double c = -kSurrogateK * s * (1.0 - s) / r;
    return {c * state[0], c * state[1]};
  }
  const double s = sigmoid(kSurrogateK * (state[0] - kVelThreshold));
  return {kSurrogateK * s * (1.0 - s)};
}

Episode rollout(const EnvSpec& spec, PolicyId policy, std::uint64_t seed) {
  Rng rng(seed);
  Episode ep;
  ep.states.reserve(spec.episode_len + 1);
  ep.actions.reserve(spec.episode_len);
  ep.rewards.reserve(spec.episode_len);
  ep.costs.reserve(spec.episode_len);
  std::vector<double> state = reset(spec, seed);
  ep.states.push_back(state);
  for (int t = 0; t < spec.episode_len; ++t) {
    std::vector<double> a = policy_action(spec, policy, state, rng);
    StepResult r = step(spec, state, a);
    ep.actions.push_back(std::move(a));
    ep.rewards.push_back(r.reward);
    ep.costs.push_back(r.cost);
    state = r.next_state;
    ep.states.push_back(state);
  }
  return ep;
}

}  // namespace sdgd
