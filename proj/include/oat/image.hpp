#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace oat {

/// Single-channel image, row-major [height x width]. Holds the initial
/// pressure p0 or any reconstruction of it.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;
  double range_lo = 0.0;
  double range_hi = 1.0;

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h, fill) {}

  std::size_t size() const noexcept { return pixels.size(); }
  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool same_shape(const Image& o) const noexcept { return width == o.width && height == o.height; }
};

/// Detector-by-time pressure traces, row-major [detectors x samples].
struct Sinogram {
  std::size_t detectors = 0;
  std::size_t samples = 0;
  std::vector<double> data;
  std::string geometry_id;
  std::optional<double> snr_db;

  Sinogram() = default;
  Sinogram(std::size_t d, std::size_t s) : detectors(d), samples(s), data(d * s, 0.0) {}
};

/// Min-max rescale to [0, 1]; constant images map to all zeros.
Image minmax_normalize(const Image& img);
Image clamp(const Image& img, double lo, double hi);
bool all_finite(std::span<const double> v) noexcept;

}  // namespace oat
