#include "oat/diffusion/sampler.hpp"

#include "oat/core/error.hpp"
#include "oat/core/hash.hpp"
#include "oat/diffusion/steps.hpp"

namespace oat::diffusion {

SamplerState sampler_init(std::span<const std::uint64_t> item_seeds, std::size_t dim, const NoiseSchedule& sched,
                          const SamplerOptions& opts) {
  if (item_seeds.empty() || dim == 0) throw ShapeError("sampler: empty batch");
  SamplerState s;
  s.batch = item_seeds.size();
  s.dim = dim;
  s.timesteps = make_inference_timesteps(sched.steps(), opts.nis);
  s.x.resize(s.batch * dim);
  for (std::size_t b = 0; b < s.batch; ++b) {
    s.rngs.emplace_back(item_seeds[b]);
    s.normals.emplace_back(0.0, 1.0);
    for (std::size_t i = 0; i < dim; ++i) s.x[b * dim + i] = s.normals[b](s.rngs[b]);
  }
  return s;
}

SamplerState sampler_init(std::size_t batch, std::size_t dim, const NoiseSchedule& sched, const SamplerOptions& opts,
                          std::uint64_t first_item) {
  std::vector<std::uint64_t> seeds(batch);
  for (std::size_t b = 0; b < batch; ++b) seeds[b] = mix_seed(opts.seed, first_item + b);
  return sampler_init(seeds, dim, sched, opts);
}

void sampler_run(SamplerState& s, const EpsilonModel& model, const NoiseSchedule& sched, const SamplerOptions& opts,
                 std::size_t max_steps) {
  std::vector<double> eps(s.x.size()), z(s.dim);
  for (std::size_t taken = 0; taken < max_steps && !s.done(); ++taken, ++s.next) {
    const std::size_t t = s.timesteps[s.next];
    const std::size_t t_prev = s.next + 1 < s.timesteps.size() ? s.timesteps[s.next + 1] : 0;
    model(s.x, t, eps);
    const bool noisy = ddim_sigma(t, t_prev, opts.eta, sched) != 0.0;
    for (std::size_t b = 0; b < s.batch; ++b) {
      if (noisy)
        for (auto& v : z) v = s.normals[b](s.rngs[b]);
      const std::span<const double> xb(s.x.data() + b * s.dim, s.dim);
      const std::span<const double> eb(eps.data() + b * s.dim, s.dim);
      const auto next = ddim_step(xb, eb, t, t_prev, opts.eta, z, sched, opts.clip_x0);
      std::copy(next.begin(), next.end(), s.x.begin() + static_cast<std::ptrdiff_t>(b * s.dim));
    }
  }
}

std::vector<double> sample(const EpsilonModel& model, std::size_t batch, std::size_t dim, const NoiseSchedule& sched,
                           const SamplerOptions& opts, std::uint64_t first_item) {
  auto state = sampler_init(batch, dim, sched, opts, first_item);
  sampler_run(state, model, sched, opts);
  return std::move(state.x);
}

}  // namespace oat::diffusion
