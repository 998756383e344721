#pragma once

#include <cstddef>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace oat::diffusion {

enum class SigmaMode { beta, zero };

/// Linear beta schedule with 1-indexed timesteps. Index 0 holds the
/// convention alpha_bar(0) = 1, beta(0) = 0.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  std::size_t steps() const noexcept { return beta_.empty() ? 0 : beta_.size() - 1; }
  double beta(std::size_t t) const { return beta_.at(t); }
  double alpha(std::size_t t) const { return alpha_.at(t); }
  double alpha_bar(std::size_t t) const { return alpha_bar_.at(t); }
  double sigma(std::size_t t) const { return sigma_.at(t); }

  double beta1() const noexcept { return beta1_; }
  double beta_t() const noexcept { return betaT_; }
  SigmaMode sigma_mode() const noexcept { return mode_; }

  friend NoiseSchedule make_linear_schedule(std::size_t, double, double, SigmaMode);

 private:
  std::vector<double> beta_, alpha_, alpha_bar_, sigma_;
  double beta1_ = 0.0, betaT_ = 0.0;
  SigmaMode mode_ = SigmaMode::beta;
};

/// beta_t = beta1 + (t-1)(betaT-beta1)/(T-1); sigma_t = sqrt(beta_t) or 0.
NoiseSchedule make_linear_schedule(std::size_t T, double beta1, double betaT, SigmaMode mode = SigmaMode::beta);

void to_json(nlohmann::json& j, const NoiseSchedule& s);
void from_json(const nlohmann::json& j, NoiseSchedule& s);

}  // namespace oat::diffusion
