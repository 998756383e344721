#pragma once

#include <cstdint>
#include <limits>

#include "oat/image.hpp"

namespace oat::acoustic {

/// SNR sentinel meaning "leave the sinogram clean".
inline constexpr double kCleanSnr = std::numeric_limits<double>::infinity();

/// Adds white Gaussian noise of variance mean(s^2) / 10^(snr_db/10).
/// Deterministic for a given seed. Throws NumericalError on an all-zero
/// sinogram (SNR undefined) and ConfigError on NaN or -inf SNR.
Sinogram add_noise(const Sinogram& sino, double snr_db, std::uint64_t seed);

double mean_power(const Sinogram& sino) noexcept;

}  // namespace oat::acoustic
