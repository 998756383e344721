#include "oat/nn/layers.hpp"

#include <cmath>

#include "oat/core/error.hpp"

namespace oat::nn {

std::vector<double> time_embed(double t, std::size_t dim, double max_period) {
  if (dim < 2 || dim % 2 != 0) throw ConfigError("time embedding dimension must be even and >= 2, got " + std::to_string(dim));
  if (t < 0) throw ConfigError("time embedding needs t >= 0");
  std::vector<double> e(dim);
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double w = std::pow(max_period, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    e[2 * i] = std::sin(t * w);
    e[2 * i + 1] = std::cos(t * w);
  }
  return e;
}

template <typename T>
Tensor<T> time_embed_batch(std::span<const std::size_t> t, std::size_t dim, double max_period) {
  Tensor<T> out({t.size(), dim});
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto e = time_embed(static_cast<double>(t[i]), dim, max_period);
    for (std::size_t j = 0; j < dim; ++j) out.data[i * dim + j] = static_cast<T>(e[j]);
  }
  return out;
}

template <typename T>
Conv2d<T> Conv2d<T>::make(ParamSet<T>& ps, const std::string& name, std::size_t cin, std::size_t cout,
                          std::size_t k, std::mt19937_64& rng) {
  Conv2d c;
  c.w = ps.add(name + ".w", {cout, cin, k, k});
  c.b = ps.add(name + ".b", {cout});
  init_uniform_fan_in(ps[c.w].value, cin * k * k, rng);
  init_uniform_fan_in(ps[c.b].value, cin * k * k, rng);
  return c;
}

template <typename T>
Var Conv2d<T>::operator()(Tape<T>& tape, ParamSet<T>& ps, Var x) const {
  return conv2d(tape, x, tape.param(ps[w]), std::optional<Var>(tape.param(ps[b])));
}

template <typename T>
Linear<T> Linear<T>::make(ParamSet<T>& ps, const std::string& name, std::size_t in, std::size_t out,
                          std::mt19937_64& rng) {
  Linear l;
  l.w = ps.add(name + ".w", {in, out});
  l.b = ps.add(name + ".b", {out});
  init_uniform_fan_in(ps[l.w].value, in, rng);
  init_uniform_fan_in(ps[l.b].value, in, rng);
  return l;
}

template <typename T>
Var Linear<T>::operator()(Tape<T>& tape, ParamSet<T>& ps, Var x) const {
  return linear(tape, x, tape.param(ps[w]), std::optional<Var>(tape.param(ps[b])));
}

template <typename T>
GroupNorm<T> GroupNorm<T>::make(ParamSet<T>& ps, const std::string& name, std::size_t channels, std::size_t groups) {
  if (groups == 0 || channels % groups != 0)
    throw ConfigError(name + ": " + std::to_string(channels) + " channels not divisible into " +
                      std::to_string(groups) + " groups");
  GroupNorm g;
  g.gamma = ps.add(name + ".gamma", {channels});
  g.beta = ps.add(name + ".beta", {channels});
  g.groups = groups;
  std::fill(ps[g.gamma].value.data.begin(), ps[g.gamma].value.data.end(), T(1));
  return g;
}

template <typename T>
Var GroupNorm<T>::operator()(Tape<T>& tape, ParamSet<T>& ps, Var x) const {
  return group_norm(tape, x, tape.param(ps[gamma]), tape.param(ps[beta]), groups);
}

template <typename T>
Tensor<T> position_tokens(std::size_t n, std::size_t h, std::size_t w, std::size_t channels) {
  if (channels % 4 != 0) throw ConfigError("position code needs a channel count divisible by 4");
  const std::size_t half = channels / 2;
  Tensor<T> out({n, h * w, channels});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      T* row = out.ptr() + (y * w + x) * channels;
      for (std::size_t f = 0; f < half / 2; ++f) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(f) / static_cast<double>(half));
        row[2 * f] = static_cast<T>(std::sin(static_cast<double>(x) * freq));
        row[2 * f + 1] = static_cast<T>(std::cos(static_cast<double>(x) * freq));
        row[half + 2 * f] = static_cast<T>(std::sin(static_cast<double>(y) * freq));
        row[half + 2 * f + 1] = static_cast<T>(std::cos(static_cast<double>(y) * freq));
      }
    }
  for (std::size_t b = 1; b < n; ++b)
    std::copy(out.ptr(), out.ptr() + h * w * channels, out.ptr() + b * h * w * channels);
  return out;
}

template <typename T>
CrossAttention<T> CrossAttention<T>::make(ParamSet<T>& ps, const std::string& name, std::size_t channels,
                                          std::size_t token_dim, std::size_t heads, std::size_t groups,
                                          std::mt19937_64& rng, bool query_positions) {
  if (heads == 0 || channels % heads != 0)
    throw ConfigError(name + ": " + std::to_string(channels) + " channels not divisible by " +
                      std::to_string(heads) + " heads");
  CrossAttention a;
  a.norm = GroupNorm<T>::make(ps, name + ".norm", channels, groups);
  a.q = Linear<T>::make(ps, name + ".q", channels, channels, rng);
  a.k = Linear<T>::make(ps, name + ".k", token_dim, channels, rng);
  a.v = Linear<T>::make(ps, name + ".v", token_dim, channels, rng);
  a.out = Linear<T>::make(ps, name + ".out", channels, channels, rng);
  a.heads = heads;
  a.query_positions = query_positions;
  return a;
}

template <typename T>
Var CrossAttention<T>::operator()(Tape<T>& tape, ParamSet<T>& ps, Var x, Var cond, Tensor<T>* weights) const {
  const Shape xs = tape.shape(x);
  Var tokens = to_tokens(tape, norm(tape, ps, x));
  if (query_positions) tokens = add(tape, tokens, tape.constant(position_tokens<T>(xs[0], xs[2], xs[3], xs[1])));
  const Var o = attention(tape, q(tape, ps, tokens), k(tape, ps, cond), v(tape, ps, cond), heads, weights);
  return add(tape, x, from_tokens(tape, out(tape, ps, o), xs[2], xs[3]));
}

template Tensor<float> time_embed_batch<float>(std::span<const std::size_t>, std::size_t, double);
template Tensor<double> time_embed_batch<double>(std::span<const std::size_t>, std::size_t, double);
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct GroupNorm<float>;
template struct GroupNorm<double>;
template Tensor<float> position_tokens<float>(std::size_t, std::size_t, std::size_t, std::size_t);
template Tensor<double> position_tokens<double>(std::size_t, std::size_t, std::size_t, std::size_t);
template struct CrossAttention<float>;
template struct CrossAttention<double>;

}  // namespace oat::nn
