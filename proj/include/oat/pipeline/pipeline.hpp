#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oat/acoustic/forward_operator.hpp"
#include "oat/diffusion/sampler.hpp"
#include "oat/eval/report.hpp"
#include "oat/image.hpp"
#include "oat/nn/models.hpp"
#include "oat/nn/train.hpp"
#include "oat/phantom/dataset.hpp"
#include "oat/phantom/patches.hpp"
#include "oat/pipeline/config.hpp"

namespace oat::pipeline {

/// Where every stage reads and writes below the run directory.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path config_file() const { return root / "config.json"; }
  std::filesystem::path operator_dir(acoustic::Placement p) const;
  std::filesystem::path dataset_dir() const { return root / "dataset"; }
  std::filesystem::path fdunet_dir() const { return root / "models" / "fdunet"; }
  std::filesystem::path cip_dir(ConditionOn c) const;
  std::filesystem::path diffusion_dir(ConditionOn c) const;
  std::filesystem::path eval_dir() const { return root / "eval"; }
};

/// Trained networks in inference form. Only the members a method needs are set.
struct Models {
  ConditionOn condition = ConditionOn::fdunet;
  std::unique_ptr<nn::FDUNet<float>> fdunet;
  std::unique_ptr<nn::CIPAutoencoder<float>> cip;
  std::unique_ptr<nn::ConditionalDenoiser<float>> denoiser;
};

// Reconstruction methods. Every public reconstruction is min-max normalized
// to [0, 1] so metrics use a fixed data range.

/// Raw back-projection A^T p, unnormalized.
Image back_project(const acoustic::ForwardOperator& op, const Sinogram& sino);
Image reconstruct_lbp(const acoustic::ForwardOperator& op, const Sinogram& sino);
Image reconstruct_tikhonov(const acoustic::ForwardOperator& op, const Sinogram& sino, double lambda,
                           const TikhonovConfig& cfg);
/// Network output for a min-max normalized LBP image; not clamped.
Image fdunet_forward(nn::FDUNet<float>& net, const Image& input);
Image reconstruct_fdunet(const acoustic::ForwardOperator& op, nn::FDUNet<float>& net, const Sinogram& sino);

/// The image the CIP sees: the normalized LBP, or the FD-UNet output clamped
/// to [0, 1].
Image conditioning_image(const Image& raw_lbp, ConditionOn condition, nn::FDUNet<float>* net);

struct DarOptions {
  std::size_t nis = 25;
  double eta = 0.0;
  std::uint64_t seed = 0;
  /// Feeds the per-patch seed mix_seed(seed, image_id, patch).
  std::uint64_t image_id = 0;
  bool clip_x0 = true;
};

/// Patches the conditioning image, encodes each patch, samples every patch
/// with its own seed and merges. Output in [0, 1] before normalization.
Image dar_from_conditioning(Models& models, const Image& conditioning, const phantom::PatchGrid& grid,
                            const diffusion::NoiseSchedule& sched, const DarOptions& opts);
/// LBP, optional FD-UNet, conditional sampling, merge, min-max.
Image reconstruct_dar(const acoustic::ForwardOperator& op, Models& models, const Sinogram& sino,
                      const phantom::PatchGrid& grid, const diffusion::NoiseSchedule& sched, const DarOptions& opts);

enum class ImageFormat { pgm, tensorfile };

/// Picks the format from the extension: .pgm or .oatd.
ImageFormat format_for_path(const std::string& path);
/// pgm: 16-bit after min-max scaling; tensorfile: lossless. Throws
/// NumericalError on non-finite pixels and IoError on an unwritable path.
void export_image(const Image& img, const std::string& path, ImageFormat format);

/// One run directory and its configuration. Stages check their prerequisites
/// and raise PrerequisiteError naming the stage that has to run first.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  const PipelineConfig& config() const noexcept { return config_; }
  const RunLayout& layout() const noexcept { return layout_; }
  phantom::PatchGrid patch_grid() const;

  /// Loaded from the run directory, or built and saved on first use.
  const acoustic::ForwardOperator& forward_operator(acoustic::Placement placement);
  double tikhonov_lambda();

  phantom::DatasetManifest build_dataset();
  phantom::DatasetManifest manifest() const;

  /// Trains the FD-UNet on (normalized LBP, phantom) pairs and attaches its
  /// output for every dataset entry to the manifest.
  nn::TrainResult train_fdunet(const nn::EpochCallback& on_epoch = {});
  nn::TrainResult train_cip(ConditionOn condition, const nn::EpochCallback& on_epoch = {});
  nn::TrainResult train_diffusion(ConditionOn condition, const nn::EpochCallback& on_epoch = {});

  /// Loads what a method needs: "fdunet" or "dar" with a condition.
  std::unique_ptr<nn::FDUNet<float>> load_fdunet() const;
  Models load_dar_models(ConditionOn condition) const;

  /// Scores every requested method on the test split. Records and metric
  /// values depend only on the configuration and seeds; wall-clock times are
  /// returned separately.
  eval::MetricReport evaluate(const EvalConfig& eval, std::vector<eval::TimingRecord>* timings = nullptr);
  /// evaluate() plus report.tsv, summary.txt and timings.tsv under eval/.
  eval::MetricReport run_eval(const EvalConfig& eval);

 private:
  PipelineConfig config_;
  RunLayout layout_;
  std::optional<acoustic::ForwardOperator> nominal_, jittered_;
  std::optional<double> lambda_;
};

}  // namespace oat::pipeline
