#include "oat/nn/adam.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "oat/core/error.hpp"

namespace oat::nn {

void AdamConfig::validate() const {
  if (!(learning_rate > 0) || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(epsilon > 0))
    throw ConfigError("optimizer: need learning_rate > 0, betas in [0, 1), epsilon > 0");
}

void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon}};
}

void from_json(const nlohmann::json& j, AdamConfig& c) {
  if (!j.is_object()) throw ConfigError("optimizer must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "epsilon") c.epsilon = value.get<double>();
      else throw ConfigError("optimizer: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("optimizer." + key + ": " + e.what());
    }
  }
}

template <typename T>
void adam_update(std::span<Parameter<T>* const> params, AdamState<T>& state) {
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->value.size(), T(0));
      state.v.emplace_back(p->value.size(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i]->value.size() || params[i]->grad.size() != params[i]->value.size())
      throw ShapeError("optimizer state does not match parameter " + params[i]->name);
    for (T g : params[i]->grad.data)
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter " + params[i]->name);
  }
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i]->value.data;
    const auto& grad = params[i]->grad.data;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      const double mj = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      const double vj = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      value[j] -= static_cast<T>(c.learning_rate * (mj / corr1) / (std::sqrt(vj / corr2) + c.epsilon));
    }
  }
}

template <typename T>
std::vector<Parameter<T>*> param_pointers(ParamSet<T>& set, std::size_t first, std::size_t count) {
  std::vector<Parameter<T>*> out;
  for (std::size_t i = first; i < set.size() && out.size() < count; ++i) out.push_back(&set[i]);
  return out;
}

template void adam_update<float>(std::span<Parameter<float>* const>, AdamState<float>&);
template void adam_update<double>(std::span<Parameter<double>* const>, AdamState<double>&);
template std::vector<Parameter<float>*> param_pointers<float>(ParamSet<float>&, std::size_t, std::size_t);
template std::vector<Parameter<double>*> param_pointers<double>(ParamSet<double>&, std::size_t, std::size_t);

}  // namespace oat::nn
