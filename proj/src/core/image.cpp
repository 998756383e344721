#include "oat/image.hpp"

#include <algorithm>
#include <cmath>

namespace oat {

Image minmax_normalize(const Image& img) {
  Image out = img;
  out.range_lo = 0.0;
  out.range_hi = 1.0;
  if (img.pixels.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  if (!(span > 0.0)) {
    std::fill(out.pixels.begin(), out.pixels.end(), 0.0);
    return out;
  }
  for (auto& v : out.pixels) v = (v - lo) / span;
  return out;
}

Image clamp(const Image& img, double lo, double hi) {
  Image out = img;
  for (auto& v : out.pixels) v = std::clamp(v, lo, hi);
  return out;
}

bool all_finite(std::span<const double> v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace oat
