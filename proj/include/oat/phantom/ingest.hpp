#pragma once

#include <string>

#include "oat/image.hpp"

namespace oat::phantom {

struct IngestResult {
  Image image;
  /// Set when the source had no dynamic range and was not normalized.
  bool zero_range = false;
};

/// Loads a graymap (.pgm) or TensorFile, resamples bilinearly to nx x ny with
/// pixel centres aligned, and optionally min-max rescales to [0, 1].
IngestResult ingest_image(const std::string& path, std::size_t nx, std::size_t ny, bool normalize);

/// Bilinear resampling with pixel-centre alignment and edge clamping. Returns
/// an exact copy when the size is unchanged.
Image resample_bilinear(const Image& src, std::size_t nx, std::size_t ny);

}  // namespace oat::phantom
