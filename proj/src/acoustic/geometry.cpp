#include "oat/acoustic/geometry.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "oat/core/error.hpp"
#include "oat/core/hash.hpp"

namespace oat::acoustic {

ImagingGeometry ImagingGeometry::full_scale() { return {}; }

ImagingGeometry ImagingGeometry::desk_scale() {
  ImagingGeometry g;
  g.grid_nx = 32;
  g.grid_ny = 32;
  g.pixel_pitch = 200e-6;
  g.detector_count = 16;
  g.ring_radius = 10e-3;
  g.time_samples = 256;
  g.sir_subelements = 5;
  g.sensor_diameter = 3e-3;
  return g;
}

double ImagingGeometry::half_diagonal() const noexcept {
  const double w = static_cast<double>(grid_nx) * pixel_pitch;
  const double h = static_cast<double>(grid_ny) * pixel_pitch;
  return 0.5 * std::sqrt(w * w + h * h);
}

std::vector<double> ImagingGeometry::angles() const {
  if (!detector_angles.empty()) return detector_angles;
  std::vector<double> a(detector_count);
  for (std::size_t l = 0; l < detector_count; ++l)
    a[l] = 2.0 * std::numbers::pi * static_cast<double>(l) / static_cast<double>(detector_count);
  return a;
}

void ImagingGeometry::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("geometry: " + m); };
  if (detector_count < 1) fail("detector_count must be >= 1");
  if (time_samples < 2) fail("time_samples must be >= 2");
  if (grid_nx * grid_ny < 1) fail("grid must hold at least one pixel");
  if (!(pixel_pitch > 0) || !(ring_radius > 0) || !(sound_speed > 0) || !(dt > 0))
    fail("physical quantities must be positive");
  if (!(position_jitter_frac >= 0) || !std::isfinite(position_jitter_frac)) fail("position_jitter_frac must be >= 0");
  if (sir_subelements < 1) fail("sir_subelements must be >= 1");
  if (sir_subelements > 1 && !(sensor_diameter > 0)) fail("sensor_diameter must be positive when sir_subelements > 1");
  if (!detector_angles.empty()) {
    if (detector_angles.size() != detector_count) fail("detector_angles length must equal detector_count");
    for (std::size_t l = 0; l < detector_angles.size(); ++l) {
      const double a = detector_angles[l];
      if (!(a >= 0.0 && a < 2.0 * std::numbers::pi)) fail("detector angles must lie in [0, 2pi)");
      if (l > 0 && !(a > detector_angles[l - 1])) fail("detector angles must be strictly increasing");
    }
  }
}

std::string ImagingGeometry::id() const {
  nlohmann::json j = *this;
  return hex64(fnv1a(j.dump()));
}

void to_json(nlohmann::json& j, const ImagingGeometry& g) {
  j = nlohmann::json{{"grid_nx", g.grid_nx},
                     {"grid_ny", g.grid_ny},
                     {"pixel_pitch", g.pixel_pitch},
                     {"detector_count", g.detector_count},
                     {"ring_radius", g.ring_radius},
                     {"detector_angles", g.detector_angles},
                     {"position_jitter_frac", g.position_jitter_frac},
                     {"sound_speed", g.sound_speed},
                     {"dt", g.dt},
                     {"time_samples", g.time_samples},
                     {"sir_subelements", g.sir_subelements},
                     {"sensor_diameter", g.sensor_diameter},
                     {"jitter_seed", g.jitter_seed}};
}

void from_json(const nlohmann::json& j, ImagingGeometry& g) {
  if (!j.is_object()) throw ConfigError("geometry must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "grid_nx") g.grid_nx = value.get<std::size_t>();
      else if (key == "grid_ny") g.grid_ny = value.get<std::size_t>();
      else if (key == "pixel_pitch") g.pixel_pitch = value.get<double>();
      else if (key == "detector_count") g.detector_count = value.get<std::size_t>();
      else if (key == "ring_radius") g.ring_radius = value.get<double>();
      else if (key == "detector_angles") g.detector_angles = value.get<std::vector<double>>();
      else if (key == "position_jitter_frac") g.position_jitter_frac = value.get<double>();
      else if (key == "sound_speed") g.sound_speed = value.get<double>();
      else if (key == "dt") g.dt = value.get<double>();
      else if (key == "sampling_rate") g.dt = 1.0 / value.get<double>();
      else if (key == "time_samples") g.time_samples = value.get<std::size_t>();
      else if (key == "sir_subelements") g.sir_subelements = value.get<std::size_t>();
      else if (key == "sensor_diameter") g.sensor_diameter = value.get<double>();
      else if (key == "jitter_seed") g.jitter_seed = value.get<std::uint64_t>();
      else throw ConfigError("geometry: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("geometry." + key + ": " + e.what());
    }
  }
}

Vec2 pixel_center(const ImagingGeometry& g, std::size_t ix, std::size_t iy) noexcept {
  return {(static_cast<double>(ix) - 0.5 * static_cast<double>(g.grid_nx - 1)) * g.pixel_pitch,
          (static_cast<double>(iy) - 0.5 * static_cast<double>(g.grid_ny - 1)) * g.pixel_pitch};
}

namespace {

struct RingPose {
  double radius;
  double angle;
};

std::vector<RingPose> ring_poses(const ImagingGeometry& g, Placement placement) {
  const auto ang = g.angles();
  std::vector<RingPose> poses(ang.size());
  std::mt19937_64 rng(g.jitter_seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t l = 0; l < ang.size(); ++l) {
    poses[l] = {g.ring_radius, ang[l]};
    if (placement == Placement::jittered) {
      // radial offset first, then angular offset, per detector
      const double dr = u(rng);
      const double da = u(rng);
      poses[l].radius = g.ring_radius * (1.0 + g.position_jitter_frac * dr);
      poses[l].angle = ang[l] + g.position_jitter_frac * da;
    }
  }
  return poses;
}

}  // namespace

std::vector<Vec2> detector_positions(const ImagingGeometry& g, Placement placement) {
  std::vector<Vec2> out;
  for (const auto& p : ring_poses(g, placement)) out.push_back({p.radius * std::cos(p.angle), p.radius * std::sin(p.angle)});
  return out;
}

std::vector<Vec2> sensor_points(const ImagingGeometry& g, Placement placement) {
  const std::size_t sub = g.sir_subelements;
  std::vector<Vec2> out;
  out.reserve(g.detector_count * sub);
  for (const auto& p : ring_poses(g, placement)) {
    const double c = std::cos(p.angle);
    const double s = std::sin(p.angle);
    const Vec2 base{p.radius * c, p.radius * s};
    const Vec2 tangent{-s, c};
    for (std::size_t m = 0; m < sub; ++m) {
      const double offset =
          (-0.5 + (static_cast<double>(m) + 0.5) / static_cast<double>(sub)) * g.sensor_diameter;
      out.push_back({base.x + offset * tangent.x, base.y + offset * tangent.y});
    }
  }
  return out;
}

}  // namespace oat::acoustic
