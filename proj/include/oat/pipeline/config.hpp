#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oat/diffusion/schedule.hpp"
#include "oat/nn/models.hpp"
#include "oat/nn/train.hpp"
#include "oat/phantom/dataset.hpp"

namespace oat::pipeline {

enum class ConditionOn { fdunet, lbp };

std::string_view condition_name(ConditionOn c) noexcept;
ConditionOn parse_condition(std::string_view s);

struct InferenceConfig {
  std::size_t nis = 25;
  double eta = 0.0;
  std::uint64_t seed = 0;
  /// Clamp the sampler's x0 estimate to the data range at every step.
  bool clip_x0 = true;
};

/// lambda = lambda_rel * ||A^T A||, so one value works across geometries.
struct TikhonovConfig {
  double lambda_rel = 1e-2;
  std::size_t max_iters = 200;
  double tol = 1e-8;
};

struct TrainingConfig {
  nn::TrainConfig fd_unet;
  nn::TrainConfig cip;
  nn::TrainConfig diffusion;
};

struct EvalConfig {
  std::vector<std::string> methods{"lbp", "tikhonov", "fdunet", "dar"};
  std::vector<std::size_t> nis{5, 25};
  /// Empty means the sinograms stored in the dataset.
  std::vector<double> snr_db;
  /// Number of test images to score; 0 means the whole test split.
  std::size_t max_images = 0;
  bool dump_images = false;
};

struct PipelineConfig {
  phantom::DatasetConfig dataset;
  diffusion::NoiseSchedule schedule = diffusion::make_linear_schedule(1000, 1e-4, 0.02);
  std::size_t patch_size = 64;
  nn::FDUNetConfig fd_unet;
  nn::CIPConfig cip;
  nn::DenoiserConfig denoiser;
  TrainingConfig training;
  InferenceConfig inference;
  TikhonovConfig tikhonov;
  EvalConfig eval;
  std::string run_dir = "run";

  /// 32x32 grid, 2k training phantoms, T = 200; sized for a CPU.
  static PipelineConfig desk();
  /// 128x128 grid, 64x64 patches, T = 1000, paper model widths.
  static PipelineConfig paper();

  /// Field checks plus every cross-section consistency requirement.
  void validate() const;
  /// FNV-1a of the canonical JSON without run_dir.
  std::string hash() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
/// Strict: unknown keys raise ConfigError. Missing keys keep the values of c.
void from_json(const nlohmann::json& j, PipelineConfig& c);

/// Applies "a.b.c=value" to an existing key. The value is parsed as JSON and
/// falls back to a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Starts from the named profile ("desk" or "paper"), merges the file (when
/// given) and then the overrides, and validates the result.
PipelineConfig load_config(const std::string& profile, const std::string& path,
                           const std::vector<std::string>& overrides);

}  // namespace oat::pipeline
