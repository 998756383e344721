#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "oat/acoustic/forward_operator.hpp"
#include "oat/acoustic/geometry.hpp"
#include "oat/phantom/phantom.hpp"

namespace oat::phantom {

enum class Split { train, val, test };

std::string_view split_name(Split s) noexcept;
Split parse_split(std::string_view s);

struct DatasetConfig {
  acoustic::ImagingGeometry geometry = acoustic::ImagingGeometry::desk_scale();
  PhantomParams phantom = PhantomParams::desk_scale();
  std::size_t train_count = 2000;
  std::size_t val_count = 50;
  std::size_t test_count = 50;
  /// Per-entry SNR is drawn uniformly from this range; [inf, inf] means clean.
  Range<double> snr_db{30.0, 50.0};
  std::uint64_t master_seed = 1;

  void validate() const;
  std::size_t total() const noexcept { return train_count + val_count + test_count; }
  /// Hash of every field that affects the generated files.
  std::string hash() const;
};

void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);

/// File paths are relative to the manifest's root directory. The fdunet
/// column is "-" until FD-UNet outputs have been attached.
struct ManifestEntry {
  std::string phantom;
  std::string sino;
  std::string lbp;
  std::string fdunet = "-";
  Split split = Split::train;
  std::uint64_t seed = 0;
  double snr_db = 0.0;

  bool has_fdunet() const noexcept { return fdunet != "-"; }
};

struct DatasetManifest {
  std::string root;
  std::string config_hash;
  std::uint64_t master_seed = 0;
  std::vector<ManifestEntry> entries;

  std::string path(const std::string& relative) const;
  std::vector<const ManifestEntry*> split(Split s) const;
};

inline constexpr const char* kManifestName = "manifest.tsv";

void write_manifest(const DatasetManifest& m);
/// Reads root/manifest.tsv. Throws PrerequisiteError when it does not exist.
DatasetManifest read_manifest(const std::string& root);
/// Every referenced file exists and decodes; no file is shared across splits.
void validate_manifest(const DatasetManifest& m);

struct DatasetOperators {
  const acoustic::ForwardOperator* simulation = nullptr;      // jittered placement
  const acoustic::ForwardOperator* reconstruction = nullptr;  // nominal placement
};

/// Generates phantoms, noisy sinograms and LBP images under root and writes the
/// manifest. Entry i uses seed mix_seed(master_seed, i), so the output does not
/// depend on the worker count. An existing manifest with a different config
/// hash is a ConfigError; with the same hash, intact entries are kept.
DatasetManifest build_dataset(const DatasetConfig& config, const std::string& root, DatasetOperators ops = {});

}  // namespace oat::phantom
