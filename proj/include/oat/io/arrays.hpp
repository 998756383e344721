#pragma once

#include <string>

#include "oat/image.hpp"

namespace oat::io {

/// Images are stored as 2-D f64 tensors [height, width].
void write_image(const std::string& path, const Image& img);
Image read_image(const std::string& path);

/// Sinograms are stored as 2-D f64 tensors [detectors, samples].
void write_sinogram(const std::string& path, const Sinogram& sino);
Sinogram read_sinogram(const std::string& path);

}  // namespace oat::io
