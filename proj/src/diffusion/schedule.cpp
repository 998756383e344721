#include "oat/diffusion/schedule.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "oat/core/error.hpp"

namespace oat::diffusion {

NoiseSchedule make_linear_schedule(std::size_t T, double beta1, double betaT, SigmaMode mode) {
  if (T < 1) throw ConfigError("schedule: T must be >= 1");
  if (!(beta1 > 0.0) || !(beta1 <= betaT) || !(betaT < 1.0))
    throw ConfigError("schedule: need 0 < beta1 <= betaT < 1");
  NoiseSchedule s;
  s.beta1_ = beta1;
  s.betaT_ = betaT;
  s.mode_ = mode;
  s.beta_.assign(T + 1, 0.0);
  s.alpha_.assign(T + 1, 1.0);
  s.alpha_bar_.assign(T + 1, 1.0);
  s.sigma_.assign(T + 1, 0.0);
  for (std::size_t t = 1; t <= T; ++t) {
    const double b =
        T == 1 ? beta1 : beta1 + static_cast<double>(t - 1) * (betaT - beta1) / static_cast<double>(T - 1);
    s.beta_[t] = b;
    s.alpha_[t] = 1.0 - b;
    s.alpha_bar_[t] = s.alpha_bar_[t - 1] * s.alpha_[t];
    s.sigma_[t] = mode == SigmaMode::beta ? std::sqrt(b) : 0.0;
  }
  return s;
}

void to_json(nlohmann::json& j, const NoiseSchedule& s) {
  j = nlohmann::json{{"T", s.steps()},
                     {"beta1", s.beta1()},
                     {"betaT", s.beta_t()},
                     {"sigma_mode", s.sigma_mode() == SigmaMode::beta ? "beta" : "zero"}};
}

void from_json(const nlohmann::json& j, NoiseSchedule& s) {
  if (!j.is_object()) throw ConfigError("schedule must be an object");
  std::size_t T = 1000;
  double b1 = 1e-4, bT = 0.02;
  SigmaMode mode = SigmaMode::beta;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "T") T = value.get<std::size_t>();
      else if (key == "beta1") b1 = value.get<double>();
      else if (key == "betaT") bT = value.get<double>();
      else if (key == "sigma_mode") {
        const auto m = value.get<std::string>();
        if (m == "beta") mode = SigmaMode::beta;
        else if (m == "zero") mode = SigmaMode::zero;
        else throw ConfigError("schedule.sigma_mode must be \"beta\" or \"zero\"");
      } else throw ConfigError("schedule: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("schedule." + key + ": " + e.what());
    }
  }
  s = make_linear_schedule(T, b1, bT, mode);
}

}  // namespace oat::diffusion
