#pragma once

#include "oat/nn/models.hpp"

namespace oat::testing {

inline nn::FDUNetConfig tiny_fdunet() {
  nn::FDUNetConfig c;
  c.image_size = 8;
  c.widths = {4, 8};
  c.growth = 4;
  c.layers_per_block = 2;
  return c;
}

inline nn::CIPConfig tiny_cip() { return nn::CIPConfig{{16, 12, 10, 8}}; }

inline nn::DenoiserConfig tiny_denoiser() {
  nn::DenoiserConfig c;
  c.image_size = 8;
  c.channels = {8, 16};
  c.resblocks_per_scale = 2;
  c.attention_heads = 4;
  c.norm_groups = 8;
  c.cond_dim = 8;
  c.cond_tokens = 2;
  c.time_sinusoid_dim = 8;
  c.time_embed_dim = 16;
  return c;
}

}  // namespace oat::testing
