#include "oat/diffusion/steps.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "oat/core/error.hpp"

namespace oat::diffusion {

namespace {

void check_t(std::size_t t, const NoiseSchedule& s) {
  if (t < 1 || t > s.steps())
    throw ConfigError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(s.steps()) + "]");
}

void check_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": size " + std::to_string(b) + " does not match " + std::to_string(a));
}

}  // namespace

std::vector<double> q_sample(std::span<const double> x0, std::size_t t, std::span<const double> eps,
                             const NoiseSchedule& sched) {
  check_t(t, sched);
  check_same(x0.size(), eps.size(), "q_sample eps");
  const double a = std::sqrt(sched.alpha_bar(t));
  const double b = std::sqrt(1.0 - sched.alpha_bar(t));
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

double loss_terms(std::span<const double> eps, std::span<const double> eps_pred, std::span<const std::size_t> t_batch,
                  const NoiseSchedule& sched, GammaMode) {
  check_same(eps.size(), eps_pred.size(), "loss_terms prediction");
  if (t_batch.empty() || eps.size() % t_batch.size() != 0) throw ShapeError("loss_terms: batch does not divide data");
  for (auto t : t_batch) check_t(t, sched);
  const std::size_t d = eps.size() / t_batch.size();
  double total = 0.0;
  for (std::size_t b = 0; b < t_batch.size(); ++b) {
    double item = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double p = eps_pred[b * d + i];
      if (!std::isfinite(p)) throw NumericalError("loss_terms: non-finite prediction");
      const double r = eps[b * d + i] - p;
      item += r * r;
    }
    total += item / static_cast<double>(d);  // uniform gamma
  }
  return total / static_cast<double>(t_batch.size());
}

std::vector<double> ddpm_step(std::span<const double> x_t, std::span<const double> eps_pred, std::size_t t,
                              std::span<const double> z, const NoiseSchedule& sched) {
  check_t(t, sched);
  check_same(x_t.size(), eps_pred.size(), "ddpm_step eps");
  if (t > 1) check_same(x_t.size(), z.size(), "ddpm_step z");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
  const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  const double sigma = t > 1 ? sched.sigma(t) : 0.0;
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = inv_sqrt_alpha * (x_t[i] - coef * eps_pred[i]);
    if (sigma != 0.0) out[i] += sigma * z[i];
  }
  return out;
}

double ddim_sigma(std::size_t t, std::size_t t_prev, double eta, const NoiseSchedule& sched) {
  const double ab = sched.alpha_bar(t), ap = sched.alpha_bar(t_prev);
  return eta * std::sqrt((1.0 - ap) / (1.0 - ab)) * std::sqrt(1.0 - ab / ap);
}

std::vector<double> ddim_step(std::span<const double> x_t, std::span<const double> eps_pred, std::size_t t,
                              std::size_t t_prev, double eta, std::span<const double> z, const NoiseSchedule& sched,
                              bool clip_x0) {
  check_t(t, sched);
  if (t_prev >= t) throw ConfigError("ddim_step: t_prev must be below t");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("ddim_step: eta must lie in [0, 1]");
  check_same(x_t.size(), eps_pred.size(), "ddim_step eps");
  const double ab = sched.alpha_bar(t), ap = sched.alpha_bar(t_prev);
  const double sigma = ddim_sigma(t, t_prev, eta, sched);
  const double dir2 = 1.0 - ap - sigma * sigma;
  if (dir2 < -1e-15) throw NumericalError("ddim_step: sigma^2 exceeds 1 - alpha_bar(t_prev)");
  const double dir = std::sqrt(std::max(0.0, dir2));
  if (sigma != 0.0) check_same(x_t.size(), z.size(), "ddim_step z");
  const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab), sp = std::sqrt(ap);
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x0 = (x_t[i] - sb * eps_pred[i]) / sa;
    double e = eps_pred[i];
    if (clip_x0 && std::abs(x0) > 1.0) {
      x0 = std::clamp(x0, -1.0, 1.0);
      e = (x_t[i] - sa * x0) / sb;
    }
    out[i] = sp * x0 + dir * e;
    if (sigma != 0.0) out[i] += sigma * z[i];
  }
  return out;
}

std::vector<std::size_t> make_inference_timesteps(std::size_t T, std::size_t nis) {
  if (nis < 1 || nis > T) throw ConfigError("nis must lie in [1, T]");
  std::vector<std::size_t> ts(nis);
  for (std::size_t i = 0; i < nis; ++i) ts[nis - 1 - i] = (i + 1) * T / nis;
  return ts;
}

std::vector<double> to_model_range(std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = 2.0 * x[i] - 1.0;
  return out;
}

std::vector<double> from_model_range(std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = 0.5 * (x[i] + 1.0);
  return out;
}

}  // namespace oat::diffusion
