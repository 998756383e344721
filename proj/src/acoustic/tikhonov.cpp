#include "oat/acoustic/tikhonov.hpp"

#include <cmath>
#include <random>

#include "oat/core/error.hpp"
#include "oat/simd/kernels.hpp"

namespace oat::acoustic {
namespace {

double norm(std::span<const double> v) { return std::sqrt(simd::dot(v.data(), v.data(), v.size())); }

}  // namespace

TikhonovResult tikhonov_cg(const LinearMap& a, std::span<const double> data, double lambda, std::size_t max_iters,
                           double tol) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("tikhonov: lambda must be finite and >= 0");
  if (max_iters < 1) throw ConfigError("tikhonov: max_iters must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("tikhonov: tol must be > 0");
  if (data.size() != a.rows()) throw ShapeError("tikhonov: data length does not match operator rows");
  if (!all_finite(data)) throw NumericalError("tikhonov: non-finite data");

  const std::size_t n = a.cols();
  TikhonovResult out;
  out.solution.assign(n, 0.0);
  std::vector<double> b(n), r(n), p(n), q(n), tmp(a.rows());
  a.adjoint(data, b);
  const double bnorm = norm(b);
  if (bnorm == 0.0) {
    out.status = SolveStatus::converged;
    return out;
  }
  r = b;
  p = r;
  double rr = simd::dot(r.data(), r.data(), n);
  double prev_rel = 1.0;
  std::size_t growth = 0;
  out.residual = 1.0;
  for (std::size_t it = 1; it <= max_iters; ++it) {
    a.apply(p, tmp);
    a.adjoint(tmp, q);
    simd::axpy(q.data(), p.data(), lambda, n);
    const double pq = simd::dot(p.data(), q.data(), n);
    if (!(pq > 0.0) || !std::isfinite(pq)) {
      out.status = SolveStatus::diverged;
      out.iterations = it - 1;
      return out;
    }
    const double alpha = rr / pq;
    simd::axpy(out.solution.data(), p.data(), alpha, n);
    simd::axpy(r.data(), q.data(), -alpha, n);
    const double rr_new = simd::dot(r.data(), r.data(), n);
    const double rel = std::sqrt(rr_new) / bnorm;
    out.iterations = it;
    out.residual = rel;
    if (!std::isfinite(rel)) {
      out.status = SolveStatus::diverged;
      return out;
    }
    if (rel <= tol) {
      out.status = SolveStatus::converged;
      return out;
    }
    growth = rel > prev_rel ? growth + 1 : 0;
    if (growth >= 10) {
      out.status = SolveStatus::diverged;
      return out;
    }
    prev_rel = rel;
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }
  out.status = SolveStatus::max_iterations;
  return out;
}

TikhonovImage tikhonov_solve(const ForwardOperator& op, const Sinogram& sino, double lambda, std::size_t max_iters,
                             double tol) {
  const auto& g = op.geometry();
  if (sino.detectors != g.detector_count || sino.samples != g.time_samples)
    throw ShapeError("tikhonov: sinogram shape does not match geometry");
  auto res = tikhonov_cg(op, sino.data, lambda, max_iters, tol);
  TikhonovImage out;
  out.image = Image(g.grid_nx, g.grid_ny);
  out.image.pixels = std::move(res.solution);
  out.iterations = res.iterations;
  out.residual = res.residual;
  out.status = res.status;
  return out;
}

double normal_operator_norm(const LinearMap& a, std::size_t iters, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> x(a.cols()), y(a.rows()), z(a.cols());
  for (auto& v : x) v = nd(rng);
  double lambda = 0.0;
  for (std::size_t i = 0; i < iters; ++i) {
    const double nx = norm(x);
    if (nx == 0.0) return 0.0;
    for (auto& v : x) v /= nx;
    a.apply(x, y);
    a.adjoint(y, z);
    lambda = simd::dot(x.data(), z.data(), x.size());
    x.swap(z);
  }
  return lambda;
}

}  // namespace oat::acoustic
