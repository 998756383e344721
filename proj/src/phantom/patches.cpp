#include "oat/phantom/patches.hpp"

#include <algorithm>
#include <string>

#include "oat/core/error.hpp"

namespace oat::phantom {

PatchGrid PatchGrid::tiling(std::size_t width, std::size_t height, std::size_t patch_w, std::size_t patch_h) {
  if (patch_w == 0 || patch_h == 0 || width % patch_w != 0 || height % patch_h != 0)
    throw ShapeError("patch " + std::to_string(patch_w) + "x" + std::to_string(patch_h) + " does not tile " +
                     std::to_string(width) + "x" + std::to_string(height));
  return {patch_h, patch_w, height / patch_h, width / patch_w};
}

std::vector<Image> split_patches(const Image& img, const PatchGrid& grid) {
  if (grid.count() == 0 || img.width != grid.image_width() || img.height != grid.image_height())
    throw ShapeError("patch grid does not tile the image exactly");
  std::vector<Image> out;
  out.reserve(grid.count());
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      Image p(grid.patch_w, grid.patch_h);
      p.range_lo = img.range_lo;
      p.range_hi = img.range_hi;
      for (std::size_t y = 0; y < grid.patch_h; ++y) {
        const auto* row = img.pixels.data() + (r * grid.patch_h + y) * img.width + c * grid.patch_w;
        std::copy(row, row + grid.patch_w, p.pixels.data() + y * grid.patch_w);
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

Image merge_patches(const std::vector<Image>& patches, const PatchGrid& grid) {
  if (patches.size() != grid.count() || patches.empty())
    throw ShapeError("expected " + std::to_string(grid.count()) + " patches, got " + std::to_string(patches.size()));
  Image img(grid.image_width(), grid.image_height());
  img.range_lo = patches.front().range_lo;
  img.range_hi = patches.front().range_hi;
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      const Image& p = patches[r * grid.cols + c];
      if (p.width != grid.patch_w || p.height != grid.patch_h) throw ShapeError("patch shape does not match grid");
      for (std::size_t y = 0; y < grid.patch_h; ++y) {
        auto* row = img.pixels.data() + (r * grid.patch_h + y) * img.width + c * grid.patch_w;
        std::copy_n(p.pixels.data() + y * grid.patch_w, grid.patch_w, row);
      }
    }
  }
  return img;
}

}  // namespace oat::phantom
