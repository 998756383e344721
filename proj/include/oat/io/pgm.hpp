#pragma once

#include <string>

#include "oat/image.hpp"

namespace oat::io {

/// Reads binary (P5) or ASCII (P2) portable graymaps, 8 or 16 bit.
/// Values are returned scaled to [0, 1] by the file's maxval.
Image read_pgm(const std::string& path);

/// Writes a 16-bit binary graymap after min-max scaling. Constant images
/// write as all zeros.
void write_pgm16(const std::string& path, const Image& img);

/// The quantization used by write_pgm16: round((v - lo) / (hi - lo) * 65535).
unsigned quantize16(double v, double lo, double hi) noexcept;

}  // namespace oat::io
