#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "oat/acoustic/forward_operator.hpp"
#include "oat/acoustic/geometry.hpp"

namespace oat::testing {

// Dense A^s straight from the travel-time indicator, looping every
// (detector, time, pixel, sub-element). Positions are recomputed here rather
// than taken from the library.
inline Eigen::MatrixXd brute_force_system(const acoustic::ImagingGeometry& g) {
  const std::size_t nd = g.detector_count, nt = g.time_samples, sub = g.sir_subelements;
  const std::size_t npix = g.grid_nx * g.grid_ny;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nd * nt), static_cast<Eigen::Index>(npix));
  const double v = g.sound_speed, dt = g.dt;
  const double dv = g.pixel_pitch * g.pixel_pitch * g.pixel_pitch;
  const double coeff = (1.0 / (4.0 * std::numbers::pi * v * v)) * (dv / (dt * dt));
  for (std::size_t l = 0; l < nd; ++l) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(l) / static_cast<double>(nd);
    const double c = std::cos(theta), s = std::sin(theta);
    for (std::size_t k = 0; k < nt; ++k) {
      const double tk = static_cast<double>(k) * dt;
      for (std::size_t iy = 0; iy < g.grid_ny; ++iy) {
        for (std::size_t ix = 0; ix < g.grid_nx; ++ix) {
          const double px = (static_cast<double>(ix) - 0.5 * static_cast<double>(g.grid_nx - 1)) * g.pixel_pitch;
          const double py = (static_cast<double>(iy) - 0.5 * static_cast<double>(g.grid_ny - 1)) * g.pixel_pitch;
          double acc = 0.0;
          bool hit = false;
          for (std::size_t m = 0; m < sub; ++m) {
            const double off = (-0.5 + (static_cast<double>(m) + 0.5) / static_cast<double>(sub)) * g.sensor_diameter;
            const double sx = g.ring_radius * c + off * -s;
            const double sy = g.ring_radius * s + off * c;
            const double dx = sx - px, dy = sy - py;
            const double dist = std::sqrt(dx * dx + dy * dy);
            const double tau = dist / v;
            if (std::abs(tk - tau) < 0.5 * dt) {
              acc += coeff / dist;
              hit = true;
            }
          }
          if (hit) a(static_cast<Eigen::Index>(l * nt + k), static_cast<Eigen::Index>(iy * g.grid_nx + ix)) = acc / static_cast<double>(sub);
        }
      }
    }
  }
  return a;
}

inline Eigen::MatrixXd derivative_matrix(std::size_t nd, std::size_t nt, double dt) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nd * nt), static_cast<Eigen::Index>(nd * nt));
  for (std::size_t l = 0; l < nd; ++l) {
    const auto b = static_cast<Eigen::Index>(l * nt);
    const auto n = static_cast<Eigen::Index>(nt);
    d(b, b) = -1.0 / dt;
    d(b, b + 1) = 1.0 / dt;
    for (Eigen::Index k = 1; k + 1 < n; ++k) {
      d(b + k, b + k - 1) = -0.5 / dt;
      d(b + k, b + k + 1) = 0.5 / dt;
    }
    d(b + n - 1, b + n - 2) = -1.0 / dt;
    d(b + n - 1, b + n - 1) = 1.0 / dt;
  }
  return d;
}

inline Eigen::MatrixXd to_dense(const acoustic::CsrMatrix& m) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
  for (std::size_t r = 0; r < m.rows; ++r)
    for (auto e = m.row_offsets[r]; e < m.row_offsets[r + 1]; ++e)
      d(static_cast<Eigen::Index>(r), m.col_indices[e]) = m.values[e];
  return d;
}

}  // namespace oat::testing
