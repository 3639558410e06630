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

#include "sdgd/approx.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "sdgd/parallel.hpp"
#include "sdgd/rng.hpp"

namespace sdgd::nn {

namespace {

constexpr std::size_t kChunkSize = 16;  // fixed so reductions never depend on thread count

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double silu(double z) { return z * sigmoid(z); }
double dsilu(double z) {
  const double s = sigmoid(z);
  return s * (1.0 + z * (1.0 - s));
}

}  // namespace

void NetSpec::validate() const {
  if (input_dim <= 0 || output_dim <= 0) {
    throw std::invalid_argument("nn: input_dim and output_dim must be positive");
  }
  if (hidden.empty()) {
    throw std::invalid_argument("nn: at least one hidden layer required");
  }
  for (int h : hidden) {
    if (h <= 0) throw std::invalid_argument("nn: hidden widths must be positive");
  }
}

std::vector<int> NetSpec::layer_sizes() const {
  std::vector<int> sizes;
  sizes.reserve(hidden.size() + 2);
  sizes.push_back(input_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output_dim);
  return sizes;
}

std::size_t param_count(const NetSpec& spec) {
  spec.validate();
  const auto sizes = spec.layer_sizes();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    n += static_cast<std::size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
  }
  return n;
}

Params init_params(const NetSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto sizes = spec.layer_sizes();
  Params p(param_count(spec), 0.0);
  Rng rng(seed);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    const std::size_t nw = static_cast<std::size_t>(fan_in) * fan_out;
    for (std::size_t i = 0; i < nw; ++i) p[off + i] = rng.uniform(-bound, bound);
    off += nw + fan_out;  // biases stay zero
  }
  return p;
}

Workspace::Workspace(const NetSpec& spec) {
  const auto sizes = spec.layer_sizes();
  act.resize(sizes.size());
  pre.resize(sizes.size());
  delta.resize(sizes.size());
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    act[l].assign(sizes[l], 0.0);
    pre[l].assign(sizes[l], 0.0);
    delta[l].assign(sizes[l], 0.0);
  }
}

void forward(const NetSpec& spec, const Params& params,
             std::span<const double> input, std::span<double> output,
             Workspace& ws) {
  const auto sizes = spec.layer_sizes();
  if (static_cast<int>(input.size()) != spec.input_dim ||
      static_cast<int>(output.size()) != spec.output_dim) {
    throw std::invalid_argument("nn: forward dimension mismatch");
  }
  std::copy(input.begin(), input.end(), ws.act[0].begin());
  std::size_t off = 0;
  const std::size_t n_layers = sizes.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const int n_in = sizes[l];
    const int n_out = sizes[l + 1];
    const double* W = params.data() + off;
    const double* b = W + static_cast<std::size_t>(n_in) * n_out;
    const double* in = ws.act[l].data();
    double* pre = ws.pre[l + 1].data();
    for (int j = 0; j < n_out; ++j) {
      const double* row = W + static_cast<std::size_t>(j) * n_in;
      double acc = b[j];
      for (int k = 0; k < n_in; ++k) acc += row[k] * in[k];
      pre[j] = acc;
    }
    double* out = ws.act[l + 1].data();
    const bool last = (l + 1 == n_layers);
    for (int j = 0; j < n_out; ++j) out[j] = last ? pre[j] : silu(pre[j]);
    off += static_cast<std::size_t>(n_in) * n_out + n_out;
  }
  std::copy(ws.act.back().begin(), ws.act.back().end(), output.begin());
}

void backward(const NetSpec& spec, const Params& params, Workspace& ws,
              std::span<const double> upstream, std::span<double> param_grad,
              std::span<double> input_grad) {
  const auto sizes = spec.layer_sizes();
  if (static_cast<int>(upstream.size()) != spec.output_dim) {
    throw std::invalid_argument("nn: upstream dimension mismatch");
  }
  if (param_grad.size() != param_count(spec)) {
    throw std::invalid_argument("nn: param_grad size mismatch");
  }
  const std::size_t n_layers = sizes.size() - 1;
  std::copy(upstream.begin(), upstream.end(), ws.delta[n_layers].begin());

  // Offsets of every layer's parameter block.
  std::vector<std::size_t> offsets(n_layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
  }

  for (std::size_t l = n_layers; l-- > 0;) {
    const int n_in = sizes[l];
    const int n_out = sizes[l + 1];
    const double* W = params.data() + offsets[l];
    double* gW = param_grad.data() + offsets[l];
    double* gb = gW + static_cast<std::size_t>(n_in) * n_out;
    const double* in = ws.act[l].data();
    const double* d = ws.delta[l + 1].data();
    for (int j = 0; j < n_out; ++j) {
      const double dj = d[j];
      double* grow = gW + static_cast<std::size_t>(j) * n_in;
      for (int k = 0; k < n_in; ++k) grow[k] += dj * in[k];
      gb[j] += dj;
    }
    const bool need_input = (l > 0) || !input_grad.empty();
    if (!need_input) continue;
    double* dprev = ws.delta[l].data();
    for (int k = 0; k < n_in; ++k) dprev[k] = 0.0;
    for (int j = 0; j < n_out; ++j) {
      const double dj = d[j];
      const double* row = W + static_cast<std::size_t>(j) * n_in;
      for (int k = 0; k < n_in; ++k) dprev[k] += dj * row[k];
    }
    if (l > 0) {
      const double* pre = ws.pre[l].data();
      for (int k = 0; k < n_in; ++k) dprev[k] *= dsilu(pre[k]);
    }
  }
  if (!input_grad.empty()) {
    if (static_cast<int>(input_grad.size()) != spec.input_dim) {
      throw std::invalid_argument("nn: input_grad size mismatch");
    }
    std::copy(ws.delta[0].begin(), ws.delta[0].end(), input_grad.begin());
  }
}

std::pair<std::vector<double>, std::vector<double>> grad(
    const NetSpec& spec, const Params& params, std::span<const double> input,
    std::span<const double> upstream) {
  Workspace ws(spec);
  std::vector<double> out(spec.output_dim);
  forward(spec, params, input, out, ws);
  std::vector<double> pg(param_count(spec), 0.0);
  std::vector<double> ig(spec.input_dim, 0.0);
  backward(spec, params, ws, upstream, pg, ig);
  return {std::move(pg), std::move(ig)};
}

AdamState::AdamState(std::size_t n_params, double lr_in)
    : m(n_params, 0.0), v(n_params, 0.0), lr(lr_in) {}

void adam_step(Params& params, AdamState& state, std::span<const double> grads) {
  if (params.size() != state.m.size() || grads.size() != params.size()) {
    throw std::invalid_argument("nn: adam size mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

double accumulate_batch(
    const NetSpec& spec, std::size_t batch,
    const std::function<double(std::size_t, Workspace&, std::span<double>)>&
        eval_sample,
    std::span<double> grad_out) {
  const std::size_t n_params = param_count(spec);
  if (grad_out.size() != n_params) {
    throw std::invalid_argument("nn: grad_out size mismatch");
  }
  if (batch == 0) throw std::invalid_argument("nn: empty batch");
  const std::size_t n_chunks = (batch + kChunkSize - 1) / kChunkSize;
  std::vector<std::vector<double>> chunk_grad(n_chunks);
  std::vector<double> chunk_loss(n_chunks, 0.0);
  par::parallel_for(static_cast<std::int64_t>(n_chunks), [&](std::int64_t c) {
    auto& g = chunk_grad[c];
    g.assign(n_params, 0.0);
    Workspace ws(spec);
    const std::size_t lo = static_cast<std::size_t>(c) * kChunkSize;
    const std::size_t hi = std::min(lo + kChunkSize, batch);
    double loss = 0.0;
    for (std::size_t i = lo; i < hi; ++i) loss += eval_sample(i, ws, g);
    chunk_loss[c] = loss;
  });
  std::fill(grad_out.begin(), grad_out.end(), 0.0);
  double loss = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    const auto& g = chunk_grad[c];
    for (std::size_t i = 0; i < n_params; ++i) grad_out[i] += g[i];
    loss += chunk_loss[c];
  }
  const double inv = 1.0 / static_cast<double>(batch);
  for (auto& g : grad_out) g *= inv;
  return loss * inv;
}

void save_params(const std::filesystem::path& path, const NetSpec& spec,
                 const Params& params) {
  spec.validate();
  if (params.size() != param_count(spec)) {
    throw std::invalid_argument("nn: params do not match spec");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("nn: cannot open " + path.string() + " for writing");
  f.write("SDGDNN01", 8);
  nlohmann::json j{{"input_dim", spec.input_dim},
                   {"output_dim", spec.output_dim},
                   {"hidden", spec.hidden},
                   {"activation", "silu"},
                   {"dtype", "f32le"}};
  const std::string hdr = j.dump() + "\n";
  f.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  std::vector<float> buf(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) buf[i] = static_cast<float>(params[i]);
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw std::runtime_error("nn: write failed for " + path.string());
}

std::pair<NetSpec, Params> load_params(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("nn: cannot open " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "SDGDNN01", 8) != 0) {
    throw std::runtime_error("nn: bad magic in " + path.string());
  }
  std::string hdr;
  if (!std::getline(f, hdr)) throw std::runtime_error("nn: missing header line");
  nlohmann::json j = nlohmann::json::parse(hdr);
  NetSpec spec;
  spec.input_dim = j.at("input_dim").get<int>();
  spec.output_dim = j.at("output_dim").get<int>();
  spec.hidden = j.at("hidden").get<std::vector<int>>();
  spec.validate();
  const std::size_t n = param_count(spec);
  std::vector<float> buf(n);
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(n * sizeof(float)));
  if (f.gcount() != static_cast<std::streamsize>(n * sizeof(float))) {
    throw std::runtime_error("nn: truncated parameter payload in " + path.string());
  }
  Params p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<double>(buf[i]);
  return {spec, std::move(p)};
}

}  // namespace sdgd::nn
