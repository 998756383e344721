#include "oat/eval/metrics.hpp"

#include <array>
#include <cmath>

#include "oat/core/error.hpp"

namespace oat::eval {

namespace {

void check_pair(const Image& x, const Image& ref, double data_range, const char* what) {
  if (!x.same_shape(ref))
    throw ShapeError(std::string(what) + ": image shapes differ (" + std::to_string(x.width) + "x" +
                     std::to_string(x.height) + " vs " + std::to_string(ref.width) + "x" + std::to_string(ref.height) + ")");
  if (!(data_range > 0)) throw ConfigError(std::string(what) + ": data_range must be positive");
}

std::array<double, kSsimWindow> gaussian_taps() {
  std::array<double, kSsimWindow> g{};
  double sum = 0;
  const double c = (kSsimWindow - 1) / 2.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

// Valid-region separable filtering: rows first, then columns.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t w, std::size_t h,
                                 const std::array<double, kSsimWindow>& g) {
  const std::size_t ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> rows(h * ow), out(oh * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) acc += g[k] * img[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) acc += g[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

double psnr(const Image& x, const Image& ref, double data_range) {
  check_pair(x, ref, data_range, "psnr");
  double sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.pixels[i] - ref.pixels[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(x.size());
  if (mse == 0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(data_range * data_range / mse));
}

double ssim(const Image& x, const Image& ref, double data_range) {
  check_pair(x, ref, data_range, "ssim");
  if (x.width < kSsimWindow || x.height < kSsimWindow)
    throw ShapeError("ssim: image smaller than the " + std::to_string(kSsimWindow) + "x" +
                     std::to_string(kSsimWindow) + " window");
  const auto g = gaussian_taps();
  const std::size_t w = x.width, h = x.height;
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x.pixels[i] * x.pixels[i];
    yy[i] = ref.pixels[i] * ref.pixels[i];
    xy[i] = x.pixels[i] * ref.pixels[i];
  }
  const auto mx = filter_valid(x.pixels, w, h, g);
  const auto my = filter_valid(ref.pixels, w, h, g);
  const auto sxx = filter_valid(xx, w, h, g);
  const auto syy = filter_valid(yy, w, h, g);
  const auto sxy = filter_valid(xy, w, h, g);
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cxy = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace oat::eval
