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

#ifndef SDGD_APPROX_HPP_
#define SDGD_APPROX_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace sdgd::nn {

// Fully connected network with SiLU hidden activations and identity output.
// One approximator serves the denoiser, reward model, cost model and the
// dynamics baseline. All math is double precision; checkpoints store f32.
struct NetSpec {
  int input_dim = 0;
  int output_dim = 0;
  std::vector<int> hidden{256, 256, 256};

  void validate() const;  // throws std::invalid_argument
  std::vector<int> layer_sizes() const;  // [input, hidden..., output]
};

// Flat parameter vector. Layout per layer: weights row-major [out][in],
// then biases [out]; layers in forward order. The layout is stable and is
// what the checkpoint format serializes.
using Params = std::vector<double>;

std::size_t param_count(const NetSpec& spec);

// Glorot-uniform weights, zero biases; draw order is layer by layer,
// weights row-major. Deterministic per seed.
Params init_params(const NetSpec& spec, std::uint64_t seed);

// Per-evaluation scratch. Forward caches activations and preactivations so
// a following backward can reuse them. One workspace per thread.
struct Workspace {
  explicit Workspace(const NetSpec& spec);
  std::vector<std::vector<double>> act;    // act[0] = input, act[L] = output
  std::vector<std::vector<double>> pre;    // pre[l] for layers 1..L
  std::vector<std::vector<double>> delta;  // backprop scratch
  // General-purpose scratch for callers that evaluate in a loop; sized on
  // first use and reused across samples within a chunk.
  std::vector<double> scratch_in, scratch_out, scratch_up;
};

void forward(const NetSpec& spec, const Params& params,
             std::span<const double> input, std::span<double> output,
             Workspace& ws);

// Reverse-mode gradient of <upstream, forward(params, input)>. Must follow a
// forward() on the same workspace. param_grad is accumulated (+=); pass an
// empty span for input_grad to skip it.
void backward(const NetSpec& spec, const Params& params, Workspace& ws,
              std::span<const double> upstream, std::span<double> param_grad,
              std::span<double> input_grad);

// Convenience single-sample gradient: returns (param_grads, input_grads).
std::pair<std::vector<double>, std::vector<double>> grad(
    const NetSpec& spec, const Params& params, std::span<const double> input,
    std::span<const double> upstream);

struct AdamState {
  explicit AdamState(std::size_t n_params, double lr = 3e-4);
  std::vector<double> m, v;
  long step = 0;
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(Params& params, AdamState& state, std::span<const double> grads);

// Deterministic minibatch gradient accumulation. eval_sample(i, ws, grad)
// runs forward/backward for sample i, accumulating raw per-sample gradients
// into grad, and returns the per-sample loss. Samples are processed in
// fixed-size chunks; chunks may run in parallel but are reduced serially in
// index order, so the result is bit-identical in Serial and OpenMP modes.
// Outputs are means over the batch. Returns the mean loss.
double accumulate_batch(
    const NetSpec& spec, std::size_t batch,
    const std::function<double(std::size_t, Workspace&, std::span<double>)>&
        eval_sample,
    std::span<double> grad_out);

// Checkpoint format: magic "SDGDNN01", one JSON line with the spec, then the
// flat parameter vector as little-endian f32.
void save_params(const std::filesystem::path& path, const NetSpec& spec,
                 const Params& params);
std::pair<NetSpec, Params> load_params(const std::filesystem::path& path);

}  // namespace sdgd::nn

#endif  // SDGD_APPROX_HPP_
