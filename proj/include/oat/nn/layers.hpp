#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "oat/nn/ops.hpp"

namespace oat::nn {

/// Sinusoidal embedding of a timestep: pairs (sin(t w_i), cos(t w_i)) with
/// w_i = max_period^(-2i/dim), interleaved.
std::vector<double> time_embed(double t, std::size_t dim, double max_period = 10000.0);

/// Stacks time_embed rows for a batch of timesteps into an [N, dim] tensor.
template <typename T>
Tensor<T> time_embed_batch(std::span<const std::size_t> t, std::size_t dim, double max_period = 10000.0);

// Layers hold parameter indices into a model's ParamSet, so one set serves
// every forward pass.

template <typename T>
struct Conv2d {
  std::size_t w = 0, b = 0;
  static Conv2d make(ParamSet<T>& ps, const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
                     std::mt19937_64& rng);
  Var operator()(Tape<T>& tape, ParamSet<T>& ps, Var x) const;
};

template <typename T>
struct Linear {
  std::size_t w = 0, b = 0;
  static Linear make(ParamSet<T>& ps, const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);
  Var operator()(Tape<T>& tape, ParamSet<T>& ps, Var x) const;
};

template <typename T>
struct GroupNorm {
  std::size_t gamma = 0, beta = 0, groups = 8;
  static GroupNorm make(ParamSet<T>& ps, const std::string& name, std::size_t channels, std::size_t groups);
  Var operator()(Tape<T>& tape, ParamSet<T>& ps, Var x) const;
};

/// Spatial queries attend to conditioning tokens. Q comes from the
/// group-normalized feature map, K and V from the tokens; the heads are
/// output-projected and added back to the input features.

/// [N, H*W, C] position code: the first C/2 channels encode the column, the
/// rest the row, as sin/cos pairs at frequencies 10000^(-2f/(C/2)).
template <typename T>
Tensor<T> position_tokens(std::size_t n, std::size_t h, std::size_t w, std::size_t channels);

template <typename T>
struct CrossAttention {
  GroupNorm<T> norm;
  Linear<T> q, k, v, out;
  std::size_t heads = 4;
  /// Add a fixed 2-D sinusoidal position code to the query tokens.
  bool query_positions = false;
  static CrossAttention make(ParamSet<T>& ps, const std::string& name, std::size_t channels, std::size_t token_dim,
                             std::size_t heads, std::size_t groups, std::mt19937_64& rng,
                             bool query_positions = false);
  /// x [N, C, H, W], cond [N, L, token_dim]. `weights` receives the softmax
  /// probabilities when non-null.
  Var operator()(Tape<T>& tape, ParamSet<T>& ps, Var x, Var cond, Tensor<T>* weights = nullptr) const;
};

}  // namespace oat::nn
