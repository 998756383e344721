#include "oat/phantom/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <spdlog/spdlog.h>

#include "oat/core/error.hpp"
#include "oat/io/pgm.hpp"
#include "oat/io/arrays.hpp"

namespace oat::phantom {

namespace {

bool has_pgm_extension(const std::string& path) {
  auto ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".pgm";
}

}  // namespace

Image resample_bilinear(const Image& src, std::size_t nx, std::size_t ny) {
  if (src.width == 0 || src.height == 0) throw ShapeError("cannot resample an empty image");
  if (nx == 0 || ny == 0) throw ShapeError("resample target must be nonempty");
  if (src.width == nx && src.height == ny) return src;
  Image out(nx, ny);
  const double sx = static_cast<double>(src.width) / static_cast<double>(nx);
  const double sy = static_cast<double>(src.height) / static_cast<double>(ny);
  const double max_x = static_cast<double>(src.width - 1), max_y = static_cast<double>(src.height - 1);
  for (std::size_t y = 0; y < ny; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < nx; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - static_cast<double>(x0);
      const double top = (1 - tx) * src.at(x0, y0) + tx * src.at(x1, y0);
      const double bottom = (1 - tx) * src.at(x0, y1) + tx * src.at(x1, y1);
      out.at(x, y) = (1 - ty) * top + ty * bottom;
    }
  }
  return out;
}

IngestResult ingest_image(const std::string& path, std::size_t nx, std::size_t ny, bool normalize) {
  if (!std::filesystem::exists(path)) throw IoError("cannot read image " + path);
  Image src = has_pgm_extension(path) ? io::read_pgm(path) : io::read_image(path);
  IngestResult r;
  r.image = resample_bilinear(src, nx, ny);
  if (normalize) {
    r.image = minmax_normalize(r.image);
  } else {
    const auto [lo, hi] = std::minmax_element(r.image.pixels.begin(), r.image.pixels.end());
    if (*lo == *hi) {
      r.zero_range = true;
      spdlog::warn("{}: image has zero dynamic range", path);
    }
  }
  return r;
}

}  // namespace oat::phantom
