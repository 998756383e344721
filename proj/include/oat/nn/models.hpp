#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "oat/nn/layers.hpp"

namespace oat::nn {

/// Fully-dense UNet. Every dense block stacks `layers_per_block` ReLU 3x3
/// convolutions of `growth` channels on the running concatenation, then
/// compresses with a 1x1 convolution. Down: max-pool; up: bilinear, 1x1
/// convolution, concatenated skip. The output adds a 1x1 projection to the
/// input image.
struct FDUNetConfig {
  std::size_t image_size = 32;
  std::vector<std::size_t> widths{16, 32, 64};
  std::size_t growth = 16;
  std::size_t layers_per_block = 4;

  void validate() const;
};

/// Fully connected autoencoder over flattened patches. Hidden layers use
/// ReLU; the code layer and the reconstruction layer are affine.
struct CIPConfig {
  std::vector<std::size_t> layer_dims{1024, 512, 256, 128};

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t code_dim() const { return layer_dims.back(); }
  void validate() const;
};

/// Epsilon-prediction UNet. Each scale has residual blocks that receive the
/// time embedding and a cross-attention block over the conditioning tokens,
/// in both the encoder and the decoder.
struct DenoiserConfig {
  std::size_t image_size = 32;
  std::vector<std::size_t> channels{16, 32, 64};
  std::size_t resblocks_per_scale = 2;
  std::size_t attention_heads = 4;
  std::size_t norm_groups = 8;
  std::size_t cond_dim = 128;
  /// cond_dim is viewed as cond_tokens tokens of cond_dim / cond_tokens features.
  std::size_t cond_tokens = 8;
  std::size_t time_sinusoid_dim = 32;
  std::size_t time_embed_dim = 64;
  /// Attention queries see a fixed 2-D position code.
  bool query_positions = false;

  std::size_t token_dim() const { return cond_dim / cond_tokens; }
  void validate() const;
};

void to_json(nlohmann::json& j, const FDUNetConfig& c);
void from_json(const nlohmann::json& j, FDUNetConfig& c);
void to_json(nlohmann::json& j, const CIPConfig& c);
void from_json(const nlohmann::json& j, CIPConfig& c);
void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);

template <typename T>
class FDUNet {
 public:
  FDUNet(const FDUNetConfig& config, std::uint64_t seed);

  /// x [N, 1, S, S] -> [N, 1, S, S].
  Var forward(Tape<T>& tape, Var x);

  const FDUNetConfig& config() const noexcept { return config_; }
  ParamSet<T>& params() noexcept { return params_; }
  const ParamSet<T>& params() const noexcept { return params_; }

 private:
  struct DenseBlock {
    std::vector<Conv2d<T>> layers;
    Conv2d<T> compress;
  };
  DenseBlock make_block(const std::string& name, std::size_t cin, std::size_t cout, std::mt19937_64& rng);
  Var run_block(Tape<T>& tape, const DenseBlock& block, Var x);

  FDUNetConfig config_;
  ParamSet<T> params_;
  Conv2d<T> stem_;
  std::vector<DenseBlock> down_;
  std::vector<Conv2d<T>> up_proj_;
  std::vector<DenseBlock> up_;
  Conv2d<T> head_;
};

template <typename T>
class CIPAutoencoder {
 public:
  CIPAutoencoder(const CIPConfig& config, std::uint64_t seed);

  /// x [N, input_dim] -> [N, code_dim].
  Var encode(Tape<T>& tape, Var x);
  /// z [N, code_dim] -> [N, input_dim].
  Var decode(Tape<T>& tape, Var z);

  const CIPConfig& config() const noexcept { return config_; }
  /// Encoder and decoder parameters; the encoder entries come first.
  ParamSet<T>& params() noexcept { return params_; }
  const ParamSet<T>& params() const noexcept { return params_; }
  std::size_t encoder_param_count() const noexcept { return 2 * encoder_.size(); }

 private:
  CIPConfig config_;
  ParamSet<T> params_;
  std::vector<Linear<T>> encoder_, decoder_;
};

template <typename T>
class ConditionalDenoiser {
 public:
  ConditionalDenoiser(const DenoiserConfig& config, std::uint64_t seed);

  /// x_t [N, 1, S, S], cond [N, cond_dim], one timestep per sample.
  Var forward(Tape<T>& tape, Var x_t, Var cond, std::span<const std::size_t> t);

  const DenoiserConfig& config() const noexcept { return config_; }
  ParamSet<T>& params() noexcept { return params_; }
  const ParamSet<T>& params() const noexcept { return params_; }

 private:
  struct ResBlock {
    GroupNorm<T> norm1, norm2;
    Conv2d<T> conv1, conv2;
    Linear<T> time;
    bool has_skip = false;
    Conv2d<T> skip;
  };
  ResBlock make_res(const std::string& name, std::size_t cin, std::size_t cout, std::mt19937_64& rng);
  Var run_res(Tape<T>& tape, const ResBlock& block, Var x, Var temb_act);
  CrossAttention<T> make_attn(const std::string& name, std::size_t channels, std::mt19937_64& rng);

  DenoiserConfig config_;
  ParamSet<T> params_;
  Linear<T> time1_, time2_;
  Conv2d<T> stem_;
  std::vector<std::vector<ResBlock>> down_res_;
  std::vector<CrossAttention<T>> down_attn_;
  ResBlock mid1_, mid2_;
  CrossAttention<T> mid_attn_;
  std::vector<std::vector<ResBlock>> up_res_;
  std::vector<CrossAttention<T>> up_attn_;
  GroupNorm<T> out_norm_;
  Conv2d<T> head_;
};

}  // namespace oat::nn
