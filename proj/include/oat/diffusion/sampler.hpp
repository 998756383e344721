#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "oat/diffusion/schedule.hpp"

namespace oat::diffusion {

/// Predicts eps for a batch of items laid out contiguously in x_t.
using EpsilonModel = std::function<void(std::span<const double> x_t, std::size_t t, std::span<double> eps_out)>;

struct SamplerOptions {
  std::size_t nis = 25;
  double eta = 0.0;
  std::uint64_t seed = 0;
  /// Clamp the implied x0 to the data range [-1, 1] at every step.
  bool clip_x0 = false;
};

/// Everything needed to continue a reverse trajectory. Each batch item owns a
/// generator seeded from (seed, item), so results do not depend on batching.
struct SamplerState {
  std::size_t batch = 0;
  std::size_t dim = 0;
  std::vector<double> x;
  std::vector<std::size_t> timesteps;
  std::size_t next = 0;  // index into timesteps of the next step to take
  std::vector<std::mt19937_64> rngs;
  std::vector<std::normal_distribution<double>> normals;

  bool done() const noexcept { return next >= timesteps.size(); }
};

/// Draws x_T ~ N(0, I) per item.
SamplerState sampler_init(std::size_t batch, std::size_t dim, const NoiseSchedule& sched, const SamplerOptions& opts,
                          std::uint64_t first_item = 0);
/// As above with an explicit generator seed per item.
SamplerState sampler_init(std::span<const std::uint64_t> item_seeds, std::size_t dim, const NoiseSchedule& sched,
                          const SamplerOptions& opts);

/// Takes up to max_steps reverse steps (all remaining by default).
void sampler_run(SamplerState& state, const EpsilonModel& model, const NoiseSchedule& sched, const SamplerOptions& opts,
                 std::size_t max_steps = static_cast<std::size_t>(-1));

/// Full trajectory from x_T to x_0 in the model range; not clamped.
std::vector<double> sample(const EpsilonModel& model, std::size_t batch, std::size_t dim, const NoiseSchedule& sched,
                           const SamplerOptions& opts, std::uint64_t first_item = 0);

}  // namespace oat::diffusion
