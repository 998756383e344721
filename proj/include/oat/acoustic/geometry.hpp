#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace oat::acoustic {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Which detector positions an operator is built from. Simulation uses the
/// jittered ring; reconstruction uses the nominal one.
enum class Placement { nominal, jittered };

/// Detector ring, pixel grid, sampling and acoustic constants. Defaults are the
/// full-scale 128x128 / 36-detector setup.
struct ImagingGeometry {
  std::size_t grid_nx = 128;
  std::size_t grid_ny = 128;
  double pixel_pitch = 110e-6;             // m
  std::size_t detector_count = 36;
  double ring_radius = 44e-3;              // m
  std::vector<double> detector_angles;     // rad; empty means uniform 2*pi/N_d spacing
  double position_jitter_frac = 1e-3;
  double sound_speed = 1490.0;             // m/s
  double dt = 1.0 / 24.4e6;                // s
  std::size_t time_samples = 1024;
  std::size_t sir_subelements = 9;
  double sensor_diameter = 13e-3;          // m
  std::uint64_t jitter_seed = 0;

  static ImagingGeometry full_scale();
  /// 32x32 grid, 16 detectors, 256 samples; ring and aperture scaled so the
  /// whole arrival window fits in 256 samples.
  static ImagingGeometry desk_scale();

  std::size_t pixel_count() const noexcept { return grid_nx * grid_ny; }
  std::size_t sinogram_size() const noexcept { return detector_count * time_samples; }
  /// Pixel area times a slice thickness equal to the pitch.
  double voxel_volume() const noexcept { return pixel_pitch * pixel_pitch * pixel_pitch; }
  double half_diagonal() const noexcept;
  /// Resolved detector angles (uniform spacing when none were given).
  std::vector<double> angles() const;

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
  /// Stable identifier derived from every field.
  std::string id() const;
};

void to_json(nlohmann::json& j, const ImagingGeometry& g);
/// Strict: unknown keys are rejected with ConfigError.
void from_json(const nlohmann::json& j, ImagingGeometry& g);

Vec2 pixel_center(const ImagingGeometry& g, std::size_t ix, std::size_t iy) noexcept;

/// Detector reference points, one per detector.
std::vector<Vec2> detector_positions(const ImagingGeometry& g, Placement placement);

/// Point sub-detectors, laid out [detector][subelement]. Sub-elements sit at
/// the cell centres of a chord of length sensor_diameter tangent to the ring.
std::vector<Vec2> sensor_points(const ImagingGeometry& g, Placement placement);

}  // namespace oat::acoustic
