#include "oat/acoustic/noise.hpp"

#include <cmath>
#include <random>

#include "oat/core/error.hpp"

namespace oat::acoustic {

double mean_power(const Sinogram& sino) noexcept {
  if (sino.data.empty()) return 0.0;
  double s = 0.0;
  for (double v : sino.data) s += v * v;
  return s / static_cast<double>(sino.data.size());
}

Sinogram add_noise(const Sinogram& sino, double snr_db, std::uint64_t seed) {
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
    throw ConfigError("add_noise: SNR must be finite or +inf");
  Sinogram out = sino;
  out.snr_db = snr_db;
  if (snr_db == kCleanSnr) return out;
  const double power = mean_power(sino);
  if (!(power > 0.0)) throw NumericalError("add_noise: sinogram has zero power, SNR is undefined");
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sigma);
  for (auto& v : out.data) v += nd(rng);
  return out;
}

}  // namespace oat::acoustic
