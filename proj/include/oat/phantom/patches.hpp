#pragma once

#include <vector>

#include "oat/image.hpp"

namespace oat::phantom {

/// rows x cols tiling of an image into patch_h x patch_w blocks, traversed
/// row-major.
struct PatchGrid {
  std::size_t patch_h = 0;
  std::size_t patch_w = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  /// Tiling of a width x height image into patches of the given size.
  /// Throws ShapeError when the sizes do not divide.
  static PatchGrid tiling(std::size_t width, std::size_t height, std::size_t patch_w, std::size_t patch_h);

  std::size_t count() const noexcept { return rows * cols; }
  std::size_t image_width() const noexcept { return cols * patch_w; }
  std::size_t image_height() const noexcept { return rows * patch_h; }
};

std::vector<Image> split_patches(const Image& img, const PatchGrid& grid);
Image merge_patches(const std::vector<Image>& patches, const PatchGrid& grid);

}  // namespace oat::phantom
