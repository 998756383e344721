#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "oat/nn/params.hpp"

namespace oat::nn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);

/// Moment buffers are sized on the first update, one per parameter in the
/// order the parameters were passed.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m, v;
};

/// Bias-corrected Adam step on every parameter's stored gradient. Throws
/// NumericalError (leaving parameters untouched) when any gradient is not
/// finite.
template <typename T>
void adam_update(std::span<Parameter<T>* const> params, AdamState<T>& state);

template <typename T>
std::vector<Parameter<T>*> param_pointers(ParamSet<T>& set, std::size_t first = 0,
                                          std::size_t count = static_cast<std::size_t>(-1));

}  // namespace oat::nn
