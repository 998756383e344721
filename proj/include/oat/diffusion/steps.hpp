#pragma once

#include <span>
#include <vector>

#include "oat/diffusion/schedule.hpp"

namespace oat::diffusion {

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
std::vector<double> q_sample(std::span<const double> x0, std::size_t t, std::span<const double> eps,
                             const NoiseSchedule& sched);

enum class GammaMode { uniform };

/// Mean over batch items and elements of gamma_t (eps - eps_pred)^2. Both
/// spans hold t_batch.size() items of equal length.
double loss_terms(std::span<const double> eps, std::span<const double> eps_pred, std::span<const std::size_t> t_batch,
                  const NoiseSchedule& sched, GammaMode gamma = GammaMode::uniform);

/// Ancestral update. The noise term is dropped at t = 1.
std::vector<double> ddpm_step(std::span<const double> x_t, std::span<const double> eps_pred, std::size_t t,
                              std::span<const double> z, const NoiseSchedule& sched);

/// Non-Markovian update from t to t_prev < t; eta = 0 is deterministic. With
/// clip_x0 the implied x0 is clamped to [-1, 1] and the noise direction is
/// recomputed from the clamped value.
std::vector<double> ddim_step(std::span<const double> x_t, std::span<const double> eps_pred, std::size_t t,
                              std::size_t t_prev, double eta, std::span<const double> z, const NoiseSchedule& sched,
                              bool clip_x0 = false);

/// DDIM noise scale for the pair (t, t_prev).
double ddim_sigma(std::size_t t, std::size_t t_prev, double eta, const NoiseSchedule& sched);

/// nis timesteps t_i = floor((i+1) T / nis), returned largest first. The last
/// entry steps to t_prev = 0.
std::vector<std::size_t> make_inference_timesteps(std::size_t T, std::size_t nis);

/// Maps [0, 1] images to the [-1, 1] diffusion range and back.
std::vector<double> to_model_range(std::span<const double> x);
std::vector<double> from_model_range(std::span<const double> x);

}  // namespace oat::diffusion
