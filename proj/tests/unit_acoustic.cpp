#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "oat/acoustic/forward_operator.hpp"
#include "oat/acoustic/noise.hpp"
#include "oat/acoustic/tikhonov.hpp"
#include "oat/core/error.hpp"
#include "acoustic_oracle.hpp"
#include "toy_geometry.hpp"

using namespace oat;
using namespace oat::acoustic;
using oat::testing::brute_force_system;
using oat::testing::derivative_matrix;
using oat::testing::to_dense;
using oat::testing::toy_geometry;
using oat::testing::unit_geometry;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

Eigen::VectorXd as_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ImagingGeometry single_pixel_geometry(double radius) {
  ImagingGeometry g;
  g.grid_nx = 1;
  g.grid_ny = 1;
  g.detector_count = 1;
  g.ring_radius = radius;
  g.position_jitter_frac = 0.0;
  g.sir_subelements = 1;
  return g;
}

class IdentityMap final : public LinearMap {
 public:
  explicit IdentityMap(std::size_t n) : n_(n) {}
  std::size_t rows() const noexcept override { return n_; }
  std::size_t cols() const noexcept override { return n_; }
  void apply(std::span<const double> x, std::span<double> y) const override { std::copy(x.begin(), x.end(), y.begin()); }
  void adjoint(std::span<const double> y, std::span<double> x) const override { std::copy(y.begin(), y.end(), x.begin()); }

 private:
  std::size_t n_;
};

// adjoint deliberately wrong: its normal operator is negative definite
class BrokenAdjoint final : public LinearMap {
 public:
  explicit BrokenAdjoint(std::size_t n) : n_(n) {}
  std::size_t rows() const noexcept override { return n_; }
  std::size_t cols() const noexcept override { return n_; }
  void apply(std::span<const double> x, std::span<double> y) const override { std::copy(x.begin(), x.end(), y.begin()); }
  void adjoint(std::span<const double> y, std::span<double> x) const override {
    for (std::size_t i = 0; i < n_; ++i) x[i] = -2.0 * y[i];
  }

 private:
  std::size_t n_;
};

}  // namespace

TEST_CASE("single centred pixel produces exactly the travel-time bins") {
  const double radius = 44e-3;
  const auto g = single_pixel_geometry(radius);
  const auto op = build_forward_operator(g);
  const auto& m = op.system_matrix();
  const double v = g.sound_speed, dt = g.dt;
  const double expected = g.voxel_volume() / (4.0 * std::numbers::pi * v * v * dt * dt * radius);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < g.time_samples; ++k) {
    const bool inside = std::abs(static_cast<double>(k) * dt - radius / v) < 0.5 * dt;
    const auto n = m.row_offsets[k + 1] - m.row_offsets[k];
    CHECK(n == (inside ? 1u : 0u));
    if (inside) {
      ++hits;
      CHECK(m.values[m.row_offsets[k]] == doctest::Approx(expected).epsilon(1e-14));
    }
  }
  CHECK(hits == 1);
}

TEST_CASE("distance exactly between two samples lands in at most one bin") {
  auto g = single_pixel_geometry(44e-3);
  const std::size_t k0 = 700;
  const double mid = (static_cast<double>(k0) + 0.5) * g.dt * g.sound_speed;
  for (double scale : {1.0, 1.0 - 1e-9, 1.0 + 1e-9}) {
    g.ring_radius = mid * scale;
    const auto op = build_forward_operator(g);
    const auto& m = op.system_matrix();
    CHECK(m.nnz() <= 1);
    for (std::size_t k = 0; k < g.time_samples; ++k) {
      if (m.row_offsets[k + 1] == m.row_offsets[k]) continue;
      const double tau = g.ring_radius / g.sound_speed;
      CHECK(std::abs(static_cast<double>(k) * g.dt - tau) < 0.5 * g.dt);
      if (scale < 1.0) CHECK(k == k0);
      if (scale > 1.0) CHECK(k == k0 + 1);
    }
    if (scale != 1.0) CHECK(m.nnz() == 1);
  }
}

TEST_CASE("system matrix equals the brute-force indicator evaluation") {
  for (std::size_t sub : {1u, 3u}) {
    auto g = toy_geometry();
    g.sir_subelements = sub;
    const auto op = build_forward_operator(g);
    const Eigen::MatrixXd dense = to_dense(op.system_matrix());
    const Eigen::MatrixXd oracle = brute_force_system(g);
    CHECK((dense - oracle).cwiseAbs().maxCoeff() == 0.0);
    CHECK((oracle.array() >= 0.0).all());
    CHECK(op.system_matrix().nnz() == static_cast<std::size_t>((oracle.array() != 0.0).count()));
  }
}

TEST_CASE("every nonzero sits in the predicted travel-time bin") {
  const auto g = toy_geometry();
  const auto op = build_forward_operator(g);
  const auto& m = op.system_matrix();
  const auto pts = sensor_points(g, Placement::nominal);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const std::size_t l = r / g.time_samples, k = r % g.time_samples;
    for (auto e = m.row_offsets[r]; e < m.row_offsets[r + 1]; ++e) {
      const std::size_t j = m.col_indices[e];
      const auto p = pixel_center(g, j % g.grid_nx, j / g.grid_nx);
      const double dist = std::hypot(pts[l].x - p.x, pts[l].y - p.y);
      REQUIRE(std::abs(static_cast<double>(k) * g.dt - dist / g.sound_speed) < 0.5 * g.dt * (1 + 1e-12));
      REQUIRE(m.values[e] > 0.0);
    }
  }
}

TEST_CASE("apply and adjoint against the dense oracle") {
  const auto g = toy_geometry();
  const auto op = build_forward_operator(g);
  const Eigen::MatrixXd a = derivative_matrix(g.detector_count, g.time_samples, g.dt) * brute_force_system(g);
  std::mt19937_64 rng(11);

  SUBCASE("zero in, zero out") {
    Image zero(g.grid_nx, g.grid_ny);
    const auto s = apply_forward(op, zero);
    for (double v : s.data) CHECK(v == 0.0);
    Sinogram zs(g.detector_count, g.time_samples);
    const auto back = apply_adjoint(op, zs);
    for (double v : back.pixels) CHECK(v == 0.0);
  }
  SUBCASE("forward matches dense matrix-vector product") {
    const auto x = random_vec(op.cols(), rng);
    std::vector<double> y(op.rows());
    op.apply(x, y);
    const Eigen::VectorXd ref = a * as_eigen(x);
    CHECK((as_eigen(y) - ref).norm() <= 1e-12 * ref.norm());
  }
  SUBCASE("adjoint matches dense transpose") {
    const auto y = random_vec(op.rows(), rng);
    std::vector<double> x(op.cols());
    op.adjoint(y, x);
    const Eigen::VectorXd ref = a.transpose() * as_eigen(y);
    CHECK((as_eigen(x) - ref).norm() <= 1e-12 * ref.norm());
  }
  SUBCASE("linearity") {
    const auto x = random_vec(op.cols(), rng);
    const auto z = random_vec(op.cols(), rng);
    const double alpha = 1.7, beta = -0.3;
    std::vector<double> comb(op.cols());
    for (std::size_t i = 0; i < comb.size(); ++i) comb[i] = alpha * x[i] + beta * z[i];
    std::vector<double> yx(op.rows()), yz(op.rows()), yc(op.rows());
    op.apply(x, yx);
    op.apply(z, yz);
    op.apply(comb, yc);
    std::vector<double> diff(op.rows());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = yc[i] - (alpha * yx[i] + beta * yz[i]);
    CHECK(norm(diff) <= 1e-12 * norm(yc));
  }
}

TEST_CASE("dot-product test holds for random pairs on several geometries") {
  std::vector<ImagingGeometry> geoms{toy_geometry(), toy_geometry(12)};
  auto jittered = toy_geometry();
  jittered.position_jitter_frac = 1e-3;
  jittered.sir_subelements = 4;
  geoms.push_back(jittered);
  std::mt19937_64 rng(5);
  for (const auto& g : geoms) {
    for (auto mode : {OperatorMode::on_the_fly, OperatorMode::materialized}) {
      const auto op = build_forward_operator(g, {Placement::jittered, mode, false});
      for (int trial = 0; trial < 100; ++trial) {
        const auto x = random_vec(op.cols(), rng);
        const auto y = random_vec(op.rows(), rng);
        std::vector<double> ax(op.rows()), aty(op.cols());
        op.apply(x, ax);
        op.adjoint(y, aty);
        REQUIRE(std::abs(dot(ax, y) - dot(x, aty)) <= 1e-12 * norm(ax) * norm(y));
      }
    }
  }
}

TEST_CASE("materialized and on-the-fly modes agree") {
  auto g = toy_geometry();
  g.sir_subelements = 3;
  const auto lazy = build_forward_operator(g);
  const auto full = lazy.with_mode(OperatorMode::materialized);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_vec(lazy.cols(), rng);
    std::vector<double> y1(lazy.rows()), y2(lazy.rows());
    lazy.apply(x, y1);
    full.apply(x, y2);
    std::vector<double> d(y1.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = y1[i] - y2[i];
    CHECK(norm(d) <= 1e-12 * norm(y1));
    const auto y = random_vec(lazy.rows(), rng);
    std::vector<double> x1(lazy.cols()), x2(lazy.cols());
    lazy.adjoint(y, x1);
    full.adjoint(y, x2);
    std::vector<double> dx(x1.size());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x1[i] - x2[i];
    CHECK(norm(dx) <= 1e-12 * norm(x1));
  }
}

TEST_CASE("one sub-element reduces exactly to the point detector") {
  auto point = toy_geometry();
  point.sir_subelements = 1;
  point.sensor_diameter = 0.0;
  auto sir = point;
  sir.sensor_diameter = 13e-3;
  const auto a = build_forward_operator(point).system_matrix();
  const auto b = build_forward_operator(sir).system_matrix();
  CHECK(a.row_offsets == b.row_offsets);
  CHECK(a.col_indices == b.col_indices);
  CHECK(a.values == b.values);
}

TEST_CASE("jittered radii stay within the tolerance band") {
  auto g = ImagingGeometry::full_scale();
  g.jitter_seed = 77;
  const auto pos = detector_positions(g, Placement::jittered);
  const auto nominal = detector_positions(g, Placement::nominal);
  bool moved = false;
  for (std::size_t l = 0; l < pos.size(); ++l) {
    const double r = std::hypot(pos[l].x, pos[l].y);
    CHECK(std::abs(r - g.ring_radius) <= g.position_jitter_frac * g.ring_radius * (1 + 1e-12));
    moved = moved || pos[l].x != nominal[l].x;
  }
  CHECK(moved);
  CHECK(detector_positions(g, Placement::jittered)[3].x == pos[3].x);
}

TEST_CASE("geometry validation") {
  auto g = toy_geometry();
  SUBCASE("ring inside the image") {
    g.ring_radius = 1e-3;
    CHECK_THROWS_AS(build_forward_operator(g), ConfigError);
  }
  SUBCASE("window too short") {
    g.time_samples = 64;
    CHECK_THROWS_AS(build_forward_operator(g), TruncationError);
    CHECK_NOTHROW(build_forward_operator(g, {Placement::nominal, OperatorMode::on_the_fly, true}));
  }
  SUBCASE("angles not increasing") {
    g.detector_angles = {0.0, 0.5, 0.4, 1, 2, 3, 4, 5};
    CHECK_THROWS_AS(g.validate(), ConfigError);
  }
  SUBCASE("single time sample") {
    g.time_samples = 1;
    CHECK_THROWS_AS(g.validate(), ConfigError);
  }
  SUBCASE("shape mismatch on apply") {
    const auto op = build_forward_operator(g);
    CHECK_THROWS_AS(apply_forward(op, Image(3, 3)), ShapeError);
    CHECK_THROWS_AS(apply_adjoint(op, Sinogram(2, 2)), ShapeError);
  }
}

TEST_CASE("operator survives a save/load cycle") {
  const auto dir = std::filesystem::temp_directory_path() / "oat_op_test";
  std::filesystem::remove_all(dir);
  auto g = toy_geometry();
  g.sir_subelements = 2;
  const auto op = build_forward_operator(g);
  save_operator(op, dir.string());
  const auto back = load_operator(dir.string());
  CHECK(back.system_matrix().values == op.system_matrix().values);
  CHECK(back.system_matrix().col_indices == op.system_matrix().col_indices);
  CHECK(back.geometry().id() == g.id());
  std::filesystem::remove_all(dir);
}

TEST_CASE("tikhonov: identity operator halves the data at lambda 1") {
  IdentityMap id(7);
  const std::vector<double> d{1, -2, 3, 0.5, 8, -1, 2};
  const auto res = tikhonov_cg(id, d, 1.0, 10, 1e-14);
  CHECK(res.status == SolveStatus::converged);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(res.solution[i] == doctest::Approx(d[i] / 2).epsilon(1e-14));
}

TEST_CASE("tikhonov: huge lambda shrinks the solution") {
  const auto g = unit_geometry();
  const auto op = build_forward_operator(g);
  std::mt19937_64 rng(2);
  const auto d = random_vec(op.rows(), rng);
  std::vector<double> atd(op.cols());
  op.adjoint(d, atd);
  const auto res = tikhonov_cg(op, d, 1e8, 200, 1e-12);
  CHECK(norm(res.solution) <= norm(atd) / 1e8 * (1 + 1e-9));
}

TEST_CASE("tikhonov: CG agrees with a dense direct solve") {
  const auto g = unit_geometry();
  const auto op = build_forward_operator(g);
  const Eigen::MatrixXd a = derivative_matrix(g.detector_count, g.time_samples, g.dt) * brute_force_system(g);
  std::mt19937_64 rng(3);
  std::vector<double> truth(op.cols());
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : truth) v = u(rng);
  std::vector<double> d(op.rows());
  op.apply(truth, d);
  const double lambda = 1e-2;
  const Eigen::MatrixXd normal = a.transpose() * a + lambda * Eigen::MatrixXd::Identity(a.cols(), a.cols());
  const Eigen::VectorXd direct = normal.ldlt().solve(a.transpose() * as_eigen(d));
  const auto res = tikhonov_cg(op, d, lambda, 5000, 1e-13);
  CHECK(res.status == SolveStatus::converged);
  CHECK((as_eigen(res.solution) - direct).norm() <= 1e-6 * direct.norm());
}

TEST_CASE("tikhonov: solution norm shrinks as lambda grows") {
  const auto g = unit_geometry();
  const auto op = build_forward_operator(g);
  std::mt19937_64 rng(4);
  const auto d = random_vec(op.rows(), rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double lambda : {1e-4, 1e-2, 1.0}) {
    const auto res = tikhonov_cg(op, d, lambda, 5000, 1e-12);
    const double n = norm(res.solution);
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("tikhonov: errors and divergence") {
  IdentityMap id(3);
  std::vector<double> d{1, 2, 3};
  CHECK_THROWS_AS(tikhonov_cg(id, d, -1.0, 10, 1e-6), ConfigError);
  CHECK_THROWS_AS(tikhonov_cg(id, d, 1.0, 0, 1e-6), ConfigError);
  d[1] = std::nan("");
  CHECK_THROWS_AS(tikhonov_cg(id, d, 1.0, 10, 1e-6), NumericalError);
  BrokenAdjoint broken(3);
  const auto res = tikhonov_cg(broken, std::vector<double>{1, 2, 3}, 0.1, 50, 1e-12);
  CHECK(res.status == SolveStatus::diverged);
  CHECK(res.solution.size() == 3);
}

TEST_CASE("noise injection") {
  Sinogram s(10, 10000);
  for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = (i % 7) * 0.25 - 0.5;
  const double power = mean_power(s);

  SUBCASE("clean sentinel is the identity") {
    const auto out = add_noise(s, kCleanSnr, 1);
    CHECK(out.data == s.data);
  }
  SUBCASE("20 dB noise power within three standard errors") {
    const auto out = add_noise(s, 20.0, 42);
    REQUIRE(out.snr_db.has_value());
    CHECK(*out.snr_db == 20.0);
    const double target = power / 100.0;
    double acc = 0;
    for (std::size_t i = 0; i < s.data.size(); ++i) acc += (out.data[i] - s.data[i]) * (out.data[i] - s.data[i]);
    const double est = acc / static_cast<double>(s.data.size());
    const double se = target * std::sqrt(2.0 / static_cast<double>(s.data.size()));
    CHECK(std::abs(est - target) <= 3 * se);
  }
  SUBCASE("same seed, same bits") {
    CHECK(add_noise(s, 35.0, 7).data == add_noise(s, 35.0, 7).data);
    CHECK(add_noise(s, 35.0, 7).data != add_noise(s, 35.0, 8).data);
  }
  SUBCASE("zero sinogram has no SNR") {
    Sinogram z(2, 4);
    CHECK_THROWS_AS(add_noise(z, 20.0, 1), NumericalError);
  }
}
