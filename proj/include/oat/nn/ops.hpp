#pragma once

#include <optional>

#include "oat/nn/tape.hpp"

namespace oat::nn {

/// Same-padded, stride-1 convolution. x [N, Cin, H, W], w [Cout, Cin, k, k]
/// with odd k, b [Cout].
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, std::optional<Var> b);

/// y = x W + b over the last axis. x [..., in], w [in, out], b [out].
template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, std::optional<Var> b);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

/// x [N, C, H, W] plus e [N, C] broadcast over space.
template <typename T>
Var add_channel(Tape<T>& tape, Var x, Var e);

template <typename T>
Var scale(Tape<T>& tape, Var x, T s);

template <typename T>
Var relu(Tape<T>& tape, Var x);

template <typename T>
Var silu(Tape<T>& tape, Var x);

/// Normalizes each of `groups` channel groups per sample, then applies the
/// per-channel affine gamma, beta [C].
template <typename T>
Var group_norm(Tape<T>& tape, Var x, Var gamma, Var beta, std::size_t groups, T eps = T(1e-5));

template <typename T>
Var max_pool2(Tape<T>& tape, Var x);

template <typename T>
Var avg_pool2(Tape<T>& tape, Var x);

template <typename T>
Var upsample_nearest2(Tape<T>& tape, Var x);

/// Factor-2 bilinear upsampling with half-pixel centres and edge clamping.
template <typename T>
Var upsample_bilinear2(Tape<T>& tape, Var x);

/// Channel concatenation of two NCHW tensors with equal N, H, W.
template <typename T>
Var concat_channels(Tape<T>& tape, Var a, Var b);

/// Same data, new shape of equal size.
template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape);

/// [N, C, H, W] -> [N, H*W, C]
template <typename T>
Var to_tokens(Tape<T>& tape, Var x);

/// [N, H*W, C] -> [N, C, H, W]
template <typename T>
Var from_tokens(Tape<T>& tape, Var x, std::size_t h, std::size_t w);

/// Multi-head scaled dot-product attention. q [N, Lq, D], k and v [N, Lk, D],
/// D divisible by heads. When weights is given it receives the softmax
/// probabilities laid out [N, heads, Lq, Lk].
template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, std::size_t heads, Tensor<T>* weights = nullptr);

/// Mean of squared differences over all elements; a scalar node.
template <typename T>
Var mse(Tape<T>& tape, Var a, Var b);

/// Sum of all elements times w; used to build scalar test losses.
template <typename T>
Var weighted_sum(Tape<T>& tape, Var x, const Tensor<T>& w);

}  // namespace oat::nn
