#include "oat/nn/models.hpp"

#include <nlohmann/json.hpp>

#include "oat/core/error.hpp"

namespace oat::nn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

// Strict object reader: every key must be claimed by one of the handlers.
template <typename F>
void read_object(const nlohmann::json& j, const std::string& section, F&& handle) {
  if (!j.is_object()) throw ConfigError(section + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    try {
      known = handle(key, value);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(section + "." + key + ": " + e.what());
    }
    if (!known) throw ConfigError(section + ": unknown key '" + key + "'");
  }
}

bool power_of_two_divides(std::size_t size, std::size_t scales) {
  return scales > 0 && size % (std::size_t{1} << (scales - 1)) == 0;
}

}  // namespace

void FDUNetConfig::validate() const {
  require(!widths.empty(), "fd_unet.widths must be nonempty");
  require(growth > 0 && layers_per_block > 0, "fd_unet growth and layers_per_block must be positive");
  require(power_of_two_divides(image_size, widths.size()) && image_size >> (widths.size() - 1) >= 1,
          "fd_unet.image_size must be divisible by 2^(scales-1)");
  for (auto w : widths) require(w > 0, "fd_unet.widths must be positive");
}

void CIPConfig::validate() const {
  require(layer_dims.size() >= 2, "cip.layer_dims needs an input and an output size");
  for (std::size_t i = 1; i < layer_dims.size(); ++i)
    require(layer_dims[i] > 0 && layer_dims[i] < layer_dims[i - 1], "cip.layer_dims must be strictly decreasing");
}

void DenoiserConfig::validate() const {
  require(!channels.empty(), "denoiser.channels must be nonempty");
  require(power_of_two_divides(image_size, channels.size()), "denoiser.image_size must be divisible by 2^(scales-1)");
  require(resblocks_per_scale > 0, "denoiser.resblocks_per_scale must be positive");
  require(norm_groups > 0 && attention_heads > 0, "denoiser norm_groups and attention_heads must be positive");
  for (std::size_t s = 0; s < channels.size(); ++s) {
    const std::size_t c = channels[s];
    require(c % norm_groups == 0, "denoiser channel width " + std::to_string(c) + " not divisible by norm_groups");
    require(c % attention_heads == 0, "denoiser channel width " + std::to_string(c) + " not divisible by heads");
    const std::size_t cat = c + (s + 1 < channels.size() ? channels[s + 1] : c);
    require(cat % norm_groups == 0, "denoiser skip concatenation width not divisible by norm_groups");
  }
  require(cond_tokens > 0 && cond_dim % cond_tokens == 0, "denoiser.cond_dim must be divisible by cond_tokens");
  require(time_sinusoid_dim >= 2 && time_sinusoid_dim % 2 == 0, "denoiser.time_sinusoid_dim must be even");
  require(time_embed_dim > 0, "denoiser.time_embed_dim must be positive");
  if (query_positions)
    for (std::size_t c : channels) require(c % 4 == 0, "denoiser.query_positions needs channel widths divisible by 4");
}

void to_json(nlohmann::json& j, const FDUNetConfig& c) {
  j = {{"image_size", c.image_size}, {"widths", c.widths}, {"growth", c.growth}, {"layers_per_block", c.layers_per_block}};
}

void from_json(const nlohmann::json& j, FDUNetConfig& c) {
  read_object(j, "fd_unet", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "image_size") c.image_size = v.get<std::size_t>();
    else if (k == "widths") c.widths = v.get<std::vector<std::size_t>>();
    else if (k == "growth") c.growth = v.get<std::size_t>();
    else if (k == "layers_per_block") c.layers_per_block = v.get<std::size_t>();
    else return false;
    return true;
  });
}

void to_json(nlohmann::json& j, const CIPConfig& c) { j = {{"layer_dims", c.layer_dims}}; }

void from_json(const nlohmann::json& j, CIPConfig& c) {
  read_object(j, "cip", [&](const std::string& k, const nlohmann::json& v) {
    if (k != "layer_dims") return false;
    c.layer_dims = v.get<std::vector<std::size_t>>();
    return true;
  });
}

void to_json(nlohmann::json& j, const DenoiserConfig& c) {
  j = {{"image_size", c.image_size},
       {"channels", c.channels},
       {"resblocks_per_scale", c.resblocks_per_scale},
       {"attention_heads", c.attention_heads},
       {"norm_groups", c.norm_groups},
       {"cond_dim", c.cond_dim},
       {"cond_tokens", c.cond_tokens},
       {"time_sinusoid_dim", c.time_sinusoid_dim},
       {"time_embed_dim", c.time_embed_dim},
       {"query_positions", c.query_positions}};
}

void from_json(const nlohmann::json& j, DenoiserConfig& c) {
  read_object(j, "denoiser", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "image_size") c.image_size = v.get<std::size_t>();
    else if (k == "channels") c.channels = v.get<std::vector<std::size_t>>();
    else if (k == "resblocks_per_scale") c.resblocks_per_scale = v.get<std::size_t>();
    else if (k == "attention_heads") c.attention_heads = v.get<std::size_t>();
    else if (k == "norm_groups") c.norm_groups = v.get<std::size_t>();
    else if (k == "cond_dim") c.cond_dim = v.get<std::size_t>();
    else if (k == "cond_tokens") c.cond_tokens = v.get<std::size_t>();
    else if (k == "time_sinusoid_dim") c.time_sinusoid_dim = v.get<std::size_t>();
    else if (k == "time_embed_dim") c.time_embed_dim = v.get<std::size_t>();
    else if (k == "query_positions") c.query_positions = v.get<bool>();
    else return false;
    return true;
  });
}

// FD-UNet

template <typename T>
typename FDUNet<T>::DenseBlock FDUNet<T>::make_block(const std::string& name, std::size_t cin, std::size_t cout,
                                                     std::mt19937_64& rng) {
  DenseBlock b;
  std::size_t c = cin;
  for (std::size_t l = 0; l < config_.layers_per_block; ++l) {
    b.layers.push_back(Conv2d<T>::make(params_, name + ".l" + std::to_string(l), c, config_.growth, 3, rng));
    c += config_.growth;
  }
  b.compress = Conv2d<T>::make(params_, name + ".compress", c, cout, 1, rng);
  return b;
}

template <typename T>
FDUNet<T>::FDUNet(const FDUNetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto& w = config_.widths;
  stem_ = Conv2d<T>::make(params_, "stem", 1, w[0], 3, rng);
  for (std::size_t s = 0; s < w.size(); ++s)
    down_.push_back(make_block("down" + std::to_string(s), s == 0 ? w[0] : w[s - 1], w[s], rng));
  for (std::size_t s = w.size() - 1; s-- > 0;) {
    up_proj_.push_back(Conv2d<T>::make(params_, "up" + std::to_string(s) + ".proj", w[s + 1], w[s], 1, rng));
    up_.push_back(make_block("up" + std::to_string(s), 2 * w[s], w[s], rng));
  }
  head_ = Conv2d<T>::make(params_, "head", w[0], 1, 1, rng);
}

template <typename T>
Var FDUNet<T>::run_block(Tape<T>& tape, const DenseBlock& block, Var x) {
  Var h = x;
  for (const auto& layer : block.layers) h = concat_channels(tape, h, relu(tape, layer(tape, params_, h)));
  return relu(tape, block.compress(tape, params_, h));
}

template <typename T>
Var FDUNet<T>::forward(Tape<T>& tape, Var x) {
  const Shape xs = tape.shape(x);
  if (xs.size() != 4 || xs[1] != 1 || xs[2] != config_.image_size || xs[3] != config_.image_size)
    throw ShapeError("fd_unet: expected [N, 1, " + std::to_string(config_.image_size) + ", " +
                     std::to_string(config_.image_size) + "], got " + shape_string(xs));
  const std::size_t scales = config_.widths.size();
  std::vector<Var> skips;
  Var h = relu(tape, stem_(tape, params_, x));
  for (std::size_t s = 0; s < scales; ++s) {
    if (s > 0) h = max_pool2(tape, h);
    h = run_block(tape, down_[s], h);
    skips.push_back(h);
  }
  for (std::size_t i = 0; i + 1 < scales; ++i) {
    const std::size_t s = scales - 2 - i;
    h = relu(tape, up_proj_[i](tape, params_, upsample_bilinear2(tape, h)));
    h = run_block(tape, up_[i], concat_channels(tape, skips[s], h));
  }
  return add(tape, x, head_(tape, params_, h));
}

// CIP autoencoder

template <typename T>
CIPAutoencoder<T>::CIPAutoencoder(const CIPConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto& d = config_.layer_dims;
  for (std::size_t i = 0; i + 1 < d.size(); ++i)
    encoder_.push_back(Linear<T>::make(params_, "enc" + std::to_string(i), d[i], d[i + 1], rng));
  for (std::size_t i = d.size() - 1; i > 0; --i)
    decoder_.push_back(Linear<T>::make(params_, "dec" + std::to_string(i - 1), d[i], d[i - 1], rng));
}

template <typename T>
Var CIPAutoencoder<T>::encode(Tape<T>& tape, Var x) {
  const Shape xs = tape.shape(x);
  if (xs.size() != 2 || xs[1] != config_.input_dim())
    throw ShapeError("cip: expected [N, " + std::to_string(config_.input_dim()) + "], got " + shape_string(xs));
  Var h = x;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    h = encoder_[i](tape, params_, h);
    if (i + 1 < encoder_.size()) h = relu(tape, h);
  }
  return h;
}

template <typename T>
Var CIPAutoencoder<T>::decode(Tape<T>& tape, Var z) {
  Var h = z;
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    h = decoder_[i](tape, params_, h);
    if (i + 1 < decoder_.size()) h = relu(tape, h);
  }
  return h;
}

// Conditional denoiser

template <typename T>
typename ConditionalDenoiser<T>::ResBlock ConditionalDenoiser<T>::make_res(const std::string& name, std::size_t cin,
                                                                           std::size_t cout, std::mt19937_64& rng) {
  ResBlock b;
  b.norm1 = GroupNorm<T>::make(params_, name + ".norm1", cin, config_.norm_groups);
  b.conv1 = Conv2d<T>::make(params_, name + ".conv1", cin, cout, 3, rng);
  b.time = Linear<T>::make(params_, name + ".time", config_.time_embed_dim, cout, rng);
  b.norm2 = GroupNorm<T>::make(params_, name + ".norm2", cout, config_.norm_groups);
  b.conv2 = Conv2d<T>::make(params_, name + ".conv2", cout, cout, 3, rng);
  b.has_skip = cin != cout;
  if (b.has_skip) b.skip = Conv2d<T>::make(params_, name + ".skip", cin, cout, 1, rng);
  return b;
}

template <typename T>
CrossAttention<T> ConditionalDenoiser<T>::make_attn(const std::string& name, std::size_t channels,
                                                    std::mt19937_64& rng) {
  return CrossAttention<T>::make(params_, name, channels, config_.token_dim(), config_.attention_heads,
                                 config_.norm_groups, rng, config_.query_positions);
}

template <typename T>
ConditionalDenoiser<T>::ConditionalDenoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto& c = config_.channels;
  const std::size_t scales = c.size(), r = config_.resblocks_per_scale;
  time1_ = Linear<T>::make(params_, "time1", config_.time_sinusoid_dim, config_.time_embed_dim, rng);
  time2_ = Linear<T>::make(params_, "time2", config_.time_embed_dim, config_.time_embed_dim, rng);
  stem_ = Conv2d<T>::make(params_, "stem", 1, c[0], 3, rng);
  std::size_t ch = c[0];
  for (std::size_t s = 0; s < scales; ++s) {
    const std::string name = "down" + std::to_string(s);
    down_res_.emplace_back();
    for (std::size_t i = 0; i < r; ++i) {
      down_res_.back().push_back(make_res(name + ".res" + std::to_string(i), ch, c[s], rng));
      ch = c[s];
    }
    down_attn_.push_back(make_attn(name + ".attn", c[s], rng));
  }
  mid1_ = make_res("mid.res0", ch, ch, rng);
  mid_attn_ = make_attn("mid.attn", ch, rng);
  mid2_ = make_res("mid.res1", ch, ch, rng);
  for (std::size_t s = scales; s-- > 0;) {
    const std::string name = "up" + std::to_string(s);
    up_res_.emplace_back();
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t cin = i == 0 ? ch + c[s] : c[s];
      up_res_.back().push_back(make_res(name + ".res" + std::to_string(i), cin, c[s], rng));
    }
    ch = c[s];
    up_attn_.push_back(make_attn(name + ".attn", c[s], rng));
  }
  out_norm_ = GroupNorm<T>::make(params_, "out.norm", c[0], config_.norm_groups);
  head_ = Conv2d<T>::make(params_, "head", c[0], 1, 3, rng);
}

template <typename T>
Var ConditionalDenoiser<T>::run_res(Tape<T>& tape, const ResBlock& b, Var x, Var temb_act) {
  Var h = b.conv1(tape, params_, silu(tape, b.norm1(tape, params_, x)));
  h = add_channel(tape, h, b.time(tape, params_, temb_act));
  h = b.conv2(tape, params_, silu(tape, b.norm2(tape, params_, h)));
  return add(tape, b.has_skip ? b.skip(tape, params_, x) : x, h);
}

template <typename T>
Var ConditionalDenoiser<T>::forward(Tape<T>& tape, Var x_t, Var cond, std::span<const std::size_t> t) {
  const Shape xs = tape.shape(x_t), cs = tape.shape(cond);
  const std::size_t s = config_.image_size;
  if (xs.size() != 4 || xs[1] != 1 || xs[2] != s || xs[3] != s)
    throw ShapeError("denoiser: expected x_t [N, 1, " + std::to_string(s) + ", " + std::to_string(s) + "], got " +
                     shape_string(xs));
  const std::size_t n = xs[0];
  if (cs != Shape{n, config_.cond_dim})
    throw ShapeError("denoiser: expected cond [" + std::to_string(n) + ", " + std::to_string(config_.cond_dim) +
                     "], got " + shape_string(cs));
  if (t.size() != n) throw ShapeError("denoiser: one timestep per sample required");

  Var temb = tape.constant(time_embed_batch<T>(t, config_.time_sinusoid_dim));
  temb = time2_(tape, params_, silu(tape, time1_(tape, params_, temb)));
  const Var temb_act = silu(tape, temb);
  const Var tokens = reshape(tape, cond, {n, config_.cond_tokens, config_.token_dim()});

  const std::size_t scales = config_.channels.size();
  std::vector<Var> skips;
  Var h = stem_(tape, params_, x_t);
  for (std::size_t sc = 0; sc < scales; ++sc) {
    if (sc > 0) h = avg_pool2(tape, h);
    for (const auto& b : down_res_[sc]) h = run_res(tape, b, h, temb_act);
    h = down_attn_[sc](tape, params_, h, tokens);
    skips.push_back(h);
  }
  h = run_res(tape, mid1_, h, temb_act);
  h = mid_attn_(tape, params_, h, tokens);
  h = run_res(tape, mid2_, h, temb_act);
  for (std::size_t i = 0; i < scales; ++i) {
    const std::size_t sc = scales - 1 - i;
    if (i > 0) h = upsample_nearest2(tape, h);
    h = concat_channels(tape, h, skips[sc]);
    for (const auto& b : up_res_[i]) h = run_res(tape, b, h, temb_act);
    h = up_attn_[i](tape, params_, h, tokens);
  }
  return head_(tape, params_, silu(tape, out_norm_(tape, params_, h)));
}

template class FDUNet<float>;
template class FDUNet<double>;
template class CIPAutoencoder<float>;
template class CIPAutoencoder<double>;
template class ConditionalDenoiser<float>;
template class ConditionalDenoiser<double>;

}  // namespace oat::nn
