#pragma once

#include "oat/acoustic/geometry.hpp"

namespace oat::testing {

// 16x16 grid, 8 detectors, 128 samples in physical units: 0.2 mm pixels,
// 5 mm ring, 25 MHz sampling.
inline acoustic::ImagingGeometry toy_geometry(std::size_t n = 16) {
  acoustic::ImagingGeometry g;
  g.grid_nx = n;
  g.grid_ny = n;
  g.pixel_pitch = 200e-6;
  g.detector_count = 8;
  g.ring_radius = 5e-3;
  g.time_samples = 128;
  g.sound_speed = 1500.0;
  g.dt = 1.0 / 25e6;
  g.position_jitter_frac = 0.0;
  g.sir_subelements = 1;
  g.sensor_diameter = 1e-3;
  return g;
}

// Same layout in dimensionless units (unit pitch and speed, quarter-unit
// sampling). The normal operator then has a largest eigenvalue near 6, so a
// Tikhonov weight of 1e-2 is a moderate regularizer instead of a rounding error.
inline acoustic::ImagingGeometry unit_geometry(std::size_t n = 12) {
  acoustic::ImagingGeometry g;
  g.grid_nx = n;
  g.grid_ny = n;
  g.pixel_pitch = 1.0;
  g.detector_count = 8;
  g.ring_radius = static_cast<double>(n) * 10.0 / 12.0;
  g.sound_speed = 1.0;
  g.dt = 0.25;
  g.time_samples = 80 * n / 12;
  g.position_jitter_frac = 0.0;
  g.sir_subelements = 1;
  g.sensor_diameter = 0.0;
  return g;
}

}  // namespace oat::testing
