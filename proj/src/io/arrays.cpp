#include "oat/io/arrays.hpp"

#include <array>

#include "oat/core/error.hpp"
#include "oat/io/tensor_file.hpp"

namespace oat::io {

namespace {

TensorRecord read_matrix(const std::string& path) {
  auto rec = read_tensor(path);
  if (rec.dims.size() != 2) throw IoError(path + ": expected a 2-D tensor");
  return rec;
}

}  // namespace

void write_image(const std::string& path, const Image& img) {
  const std::array<std::uint64_t, 2> dims{img.height, img.width};
  write_tensor(path, std::span<const double>(img.pixels), dims);
}

Image read_image(const std::string& path) {
  const auto rec = read_matrix(path);
  Image img(rec.dims[1], rec.dims[0]);
  img.pixels = rec.as_f64();
  return img;
}

void write_sinogram(const std::string& path, const Sinogram& sino) {
  const std::array<std::uint64_t, 2> dims{sino.detectors, sino.samples};
  write_tensor(path, std::span<const double>(sino.data), dims);
}

Sinogram read_sinogram(const std::string& path) {
  const auto rec = read_matrix(path);
  Sinogram s(rec.dims[0], rec.dims[1]);
  s.data = rec.as_f64();
  return s;
}

}  // namespace oat::io
