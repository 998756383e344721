#pragma once

#include <cstdint>

#include <nlohmann/json_fwd.hpp>

#include "oat/image.hpp"

namespace oat::phantom {

template <typename T>
struct Range {
  T lo{};
  T hi{};
};

/// Parameters of the procedural vessel-tree generator. Widths and lengths are
/// in pixels; curvature is the maximum heading change per pixel step (rad).
struct PhantomParams {
  std::uint64_t seed = 0;
  Range<int> n_trees{2, 4};
  Range<int> branch_depth{2, 4};
  Range<double> segment_curvature{0.0, 0.08};
  Range<double> vessel_width_px{1.2, 3.0};
  Range<double> intensity_range{0.5, 1.0};
  Range<double> fill_fraction_target{0.05, 0.25};

  /// Narrower vessels and fewer trees for 32x32 grids.
  static PhantomParams desk_scale();

  /// Throws ConfigError on empty, unordered or out-of-domain ranges.
  void validate() const;
};

void to_json(nlohmann::json& j, const PhantomParams& p);
void from_json(const nlohmann::json& j, PhantomParams& p);

struct PhantomResult {
  Image image;
  double fill_fraction = 0.0;
  int attempts = 0;
  /// False when no attempt reached the fill target and the closest was kept.
  bool fill_in_range = false;
};

inline constexpr int kMaxPhantomAttempts = 20;

/// Renders anti-aliased branching vessel trees. Background pixels are exactly
/// zero; vessel pixels lie in params.intensity_range. Deterministic in seed.
PhantomResult generate_phantom(const PhantomParams& params, std::size_t nx, std::size_t ny);

double fill_fraction(const Image& img) noexcept;

}  // namespace oat::phantom
