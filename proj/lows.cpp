#include <cmath>
#include <cstdio>
#include "sdgd/dataset.hpp"
#include "sdgd/diffusion.hpp"
using namespace sdgd;
int main() {
  const EnvSpec env = make_env_spec(EnvId::ChainVel1D);
  const auto sched = make_schedule(100);
  LabelConfig lc; lc.horizon = 32; lc.stride = 2; lc.feasible_len = 8;
  std::vector<Episode> eps;
  for (int i = 0; i < 100; ++i) {
    const PolicyId pol = i < 40 ? PolicyId::Safe : i < 70 ? PolicyId::Greedy : PolicyId::Random;
    eps.push_back(rollout(env, pol, mix_seed(2026, i)));
  }
  auto ds = Dataset::build(eps, env, lc);
  auto den = load_denoiser("/tmp/acc_cache/denoiser_v2.bin");
  nn::Workspace ws(den.net);
  Rng rng(3);
  // x0 reconstruction error on safe windows at low s, normalized units
  for (int s : {1, 2, 5, 10, 25, 50}) {
    double err2 = 0.0; int n = 0;
    for (int rep = 0; rep < 200; ++rep) {
      const std::size_t i = rng.uniform_index(ds.segments().size());
      if (ds.labels()[i].cost > 0) continue;  // safe windows only
      const auto flat = normalize_flat(ds.stats(), ds.segments()[i].flat());
      std::vector<double> e(64), xs(64), eh(64), x0(64);
      rng.fill_normal(e);
      q_sample(sched, flat, s, e, xs);
      den.predict_eps(xs, s, 0.0, eh, ws);
      predict_x0(sched, xs, s, eh, x0);
      for (int d = 0; d < 64; ++d) err2 += (x0[d] - flat[d]) * (x0[d] - flat[d]);
      n += 64;
    }
    std::printf("s=%2d x0 rmse (normalized) = %.4f\n", s, std::sqrt(err2 / n));
  }
  return 0;
}
