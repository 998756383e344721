#include "oat/phantom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "oat/core/error.hpp"
#include "oat/core/hash.hpp"

namespace oat::phantom {

PhantomParams PhantomParams::desk_scale() {
  PhantomParams p;
  p.n_trees = {1, 3};
  p.branch_depth = {1, 3};
  p.segment_curvature = {0.0, 0.15};
  p.vessel_width_px = {0.8, 1.8};
  return p;
}

void PhantomParams::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("phantom: " + m); };
  if (n_trees.lo < 1 || n_trees.hi < n_trees.lo) fail("n_trees must be an ordered range >= 1");
  if (branch_depth.lo < 0 || branch_depth.hi < branch_depth.lo) fail("branch_depth must be an ordered range >= 0");
  if (branch_depth.hi > 12) fail("branch_depth above 12 is not supported");
  if (!(segment_curvature.lo >= 0) || !(segment_curvature.hi >= segment_curvature.lo))
    fail("segment_curvature must be an ordered range >= 0");
  if (!(vessel_width_px.lo > 0) || !(vessel_width_px.hi >= vessel_width_px.lo))
    fail("vessel_width_px must be an ordered positive range");
  if (!(intensity_range.lo > 0) || !(intensity_range.hi <= 1) || !(intensity_range.hi >= intensity_range.lo))
    fail("intensity_range must be an ordered sub-range of (0, 1]");
  if (!(fill_fraction_target.lo > 0) || !(fill_fraction_target.hi < 0.5) ||
      !(fill_fraction_target.hi > fill_fraction_target.lo))
    fail("fill_fraction_target must be a nonempty sub-range of (0, 0.5)");
}

namespace {

template <typename T>
nlohmann::json range_json(const Range<T>& r) {
  return nlohmann::json::array({r.lo, r.hi});
}

template <typename T>
Range<T> range_from(const nlohmann::json& v) {
  if (!v.is_array() || v.size() != 2) throw ConfigError("expected a [lo, hi] pair");
  return {v[0].get<T>(), v[1].get<T>()};
}

struct Capsule {
  double ax, ay, bx, by;
  double radius;
  double intensity;
};

// Grows one branch as a chain of one-pixel steps, then recurses into two
// children at the tip.
void grow(std::mt19937_64& rng, const PhantomParams& p, double x, double y, double heading, double width,
          double intensity, int depth, double scale, double curvature, std::vector<Capsule>& out) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double length = scale * (0.25 + 0.2 * u(rng)) * std::pow(0.75, static_cast<double>(depth));
  const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(length));
  for (std::size_t s = 0; s < steps; ++s) {
    heading += curvature * (2.0 * u(rng) - 1.0);
    const double nx = x + std::cos(heading);
    const double ny = y + std::sin(heading);
    out.push_back({x, y, nx, ny, 0.5 * width, intensity});
    x = nx;
    y = ny;
  }
  if (depth <= 0) return;
  const double child_width = std::max(p.vessel_width_px.lo, 0.75 * width);
  for (double side : {-1.0, 1.0}) {
    const double spread = 0.3 + 0.5 * u(rng);
    grow(rng, p, x, y, heading + side * spread, child_width, intensity, depth - 1, scale, curvature, out);
  }
}

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double segment_distance(const Capsule& c, double px, double py) {
  const double vx = c.bx - c.ax, vy = c.by - c.ay;
  const double wx = px - c.ax, wy = py - c.ay;
  const double len2 = vx * vx + vy * vy;
  const double t = len2 > 0 ? std::clamp((wx * vx + wy * vy) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(wx - t * vx, wy - t * vy);
}

Image render_attempt(const PhantomParams& p, std::size_t nx, std::size_t ny, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uniform_in = [&](const Range<double>& r) { return r.lo + (r.hi - r.lo) * u(rng); };
  auto int_in = [&](const Range<int>& r) { return std::uniform_int_distribution<int>(r.lo, r.hi)(rng); };

  const double w = static_cast<double>(nx), h = static_cast<double>(ny);
  const double scale = std::min(w, h);
  std::vector<Capsule> caps;
  const int trees = int_in(p.n_trees);
  for (int t = 0; t < trees; ++t) {
    // roots start near the border and head inwards
    const double x = w * (0.1 + 0.8 * u(rng));
    const double y = h * (0.1 + 0.8 * u(rng));
    const double heading = std::atan2(0.5 * h - y, 0.5 * w - x) + (u(rng) - 0.5) * std::numbers::pi / 2;
    grow(rng, p, x, y, heading, uniform_in(p.vessel_width_px), uniform_in(p.intensity_range), int_in(p.branch_depth),
         scale, uniform_in(p.segment_curvature), caps);
  }

  Image img(nx, ny);
  const double lo = p.intensity_range.lo;
  for (const auto& c : caps) {
    const double reach = c.radius + 0.5;
    const auto x0 = static_cast<long>(std::floor(std::min(c.ax, c.bx) - reach));
    const auto x1 = static_cast<long>(std::ceil(std::max(c.ax, c.bx) + reach));
    const auto y0 = static_cast<long>(std::floor(std::min(c.ay, c.by) - reach));
    const auto y1 = static_cast<long>(std::ceil(std::max(c.ay, c.by) + reach));
    for (long iy = std::max(0L, y0); iy <= std::min(static_cast<long>(ny) - 1, y1); ++iy) {
      for (long ix = std::max(0L, x0); ix <= std::min(static_cast<long>(nx) - 1, x1); ++ix) {
        const double d = segment_distance(c, static_cast<double>(ix) + 0.5, static_cast<double>(iy) + 0.5);
        const double s = 1.0 - smoothstep(c.radius - 0.5, c.radius + 0.5, d);
        if (s <= 0.0) continue;
        const double v = std::min(lo + s * (c.intensity - lo), c.intensity);
        auto& px = img.at(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy));
        px = std::max(px, v);
      }
    }
  }
  return img;
}

}  // namespace

void to_json(nlohmann::json& j, const PhantomParams& p) {
  j = nlohmann::json{{"seed", p.seed},
                     {"n_trees", range_json(p.n_trees)},
                     {"branch_depth", range_json(p.branch_depth)},
                     {"segment_curvature", range_json(p.segment_curvature)},
                     {"vessel_width_px", range_json(p.vessel_width_px)},
                     {"intensity_range", range_json(p.intensity_range)},
                     {"fill_fraction_target", range_json(p.fill_fraction_target)}};
}

void from_json(const nlohmann::json& j, PhantomParams& p) {
  if (!j.is_object()) throw ConfigError("phantom must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "seed") p.seed = value.get<std::uint64_t>();
      else if (key == "n_trees") p.n_trees = range_from<int>(value);
      else if (key == "branch_depth") p.branch_depth = range_from<int>(value);
      else if (key == "segment_curvature") p.segment_curvature = range_from<double>(value);
      else if (key == "vessel_width_px") p.vessel_width_px = range_from<double>(value);
      else if (key == "intensity_range") p.intensity_range = range_from<double>(value);
      else if (key == "fill_fraction_target") p.fill_fraction_target = range_from<double>(value);
      else throw ConfigError("phantom: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("phantom." + key + ": " + e.what());
    }
  }
}

double fill_fraction(const Image& img) noexcept {
  if (img.pixels.empty()) return 0.0;
  const auto n = std::count_if(img.pixels.begin(), img.pixels.end(), [](double v) { return v != 0.0; });
  return static_cast<double>(n) / static_cast<double>(img.pixels.size());
}

PhantomResult generate_phantom(const PhantomParams& params, std::size_t nx, std::size_t ny) {
  params.validate();
  if (nx < 16 || ny < 16) throw ConfigError("phantom grid must be at least 16x16");
  const auto& target = params.fill_fraction_target;
  PhantomResult best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < kMaxPhantomAttempts; ++attempt) {
    Image img = render_attempt(params, nx, ny, mix_seed(params.seed, static_cast<std::uint64_t>(attempt)));
    const double f = fill_fraction(img);
    const double gap = f < target.lo ? target.lo - f : (f > target.hi ? f - target.hi : 0.0);
    if (gap < best_gap) {
      best_gap = gap;
      best.image = std::move(img);
      best.fill_fraction = f;
    }
    best.attempts = attempt + 1;
    if (gap == 0.0) break;
  }
  best.fill_in_range = best_gap == 0.0;
  return best;
}

}  // namespace oat::phantom
