#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "oat/diffusion/schedule.hpp"
#include "oat/nn/adam.hpp"
#include "oat/nn/models.hpp"

namespace oat::nn {

struct TrainConfig {
  AdamConfig optimizer;
  std::size_t epochs = 20;
  std::size_t batch = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainResult {
  /// Mean training loss of every completed epoch, including epochs restored
  /// from a checkpoint.
  std::vector<double> epoch_loss;
  std::size_t resumed_from_epoch = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// A flat float sample; images are row-major.
using Sample = std::vector<float>;

// Every trainer shuffles with an RNG derived from (seed, epoch) and writes a
// checkpoint to `checkpoint_dir` after each epoch (skipped when the path is
// empty). An existing checkpoint with the same configuration is resumed; one
// with a different configuration raises ConfigError. A non-finite loss raises
// NumericalError, leaving the last completed epoch's checkpoint on disk.

/// Regresses targets from inputs by MSE. Both hold [S, S] images.
TrainResult train_fdunet(FDUNet<float>& net, std::span<const Sample> inputs, std::span<const Sample> targets,
                         const TrainConfig& config, const std::filesystem::path& checkpoint_dir,
                         const EpochCallback& on_epoch = {});

/// Autoencoder reconstruction MSE over flattened patches.
TrainResult train_cip(CIPAutoencoder<float>& cip, std::span<const Sample> patches, const TrainConfig& config,
                      const std::filesystem::path& checkpoint_dir, const EpochCallback& on_epoch = {});

/// Epsilon-prediction training. x0 holds clean patches in the [-1, 1] model
/// range, cond the matching conditioning patches. Per sample t ~ U{1..T} and
/// eps ~ N(0, I); the CIP encoder is updated jointly with the denoiser.
TrainResult train_diffusion(ConditionalDenoiser<float>& denoiser, CIPAutoencoder<float>& cip,
                            std::span<const Sample> x0, std::span<const Sample> cond,
                            const diffusion::NoiseSchedule& sched, const TrainConfig& config,
                            const std::filesystem::path& checkpoint_dir, const EpochCallback& on_epoch = {});

}  // namespace oat::nn
