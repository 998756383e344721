#pragma once

#include "oat/image.hpp"

namespace oat::eval {

/// Returned for identical images and as an upper bound otherwise.
inline constexpr double kPsnrCapDb = 99.0;

/// 10 log10(data_range^2 / MSE), capped at kPsnrCapDb.
double psnr(const Image& x, const Image& ref, double data_range = 1.0);

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Mean of the local SSIM map over every position where the 11x11 Gaussian
/// window (sigma 1.5) fits inside the image; C1 = (0.01 R)^2, C2 = (0.03 R)^2.
double ssim(const Image& x, const Image& ref, double data_range = 1.0);

}  // namespace oat::eval
