#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "oat/nn/tensor.hpp"

namespace oat::nn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Named trainable arrays with stable addresses. Layers refer to entries by
/// index; the same set serves every forward pass (and every timestep).
template <typename T>
class ParamSet {
 public:
  std::size_t add(std::string name, Shape shape) {
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->value = Tensor<T>(shape);
    p->grad = Tensor<T>(std::move(shape));
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  Parameter<T>& operator[](std::size_t i) { return *params_.at(i); }
  const Parameter<T>& operator[](std::size_t i) const { return *params_.at(i); }
  std::size_t size() const noexcept { return params_.size(); }

  std::size_t scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), T(0));
  }

  /// Copies values (not gradients) from a set with the same layout.
  template <typename U>
  void assign_from(const ParamSet<U>& other);

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

template <typename T>
template <typename U>
void ParamSet<T>::assign_from(const ParamSet<U>& other) {
  if (other.size() != size()) throw std::invalid_argument("parameter layouts differ");
  for (std::size_t i = 0; i < size(); ++i) {
    auto& dst = (*this)[i].value;
    const auto& src = other[i].value;
    if (dst.shape != src.shape) throw std::invalid_argument("parameter " + (*this)[i].name + " shape differs");
    std::copy(src.data.begin(), src.data.end(), dst.data.begin());
  }
}

/// PyTorch-style default initialisation: weights and biases uniform in
/// +-1/sqrt(fan_in).
template <typename T>
void init_uniform_fan_in(Tensor<T>& t, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : t.data) v = static_cast<T>(u(rng));
}

}  // namespace oat::nn
