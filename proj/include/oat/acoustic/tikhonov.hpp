#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "oat/acoustic/forward_operator.hpp"
#include "oat/acoustic/linear_map.hpp"

namespace oat::acoustic {

enum class SolveStatus { converged, max_iterations, diverged };

struct TikhonovResult {
  std::vector<double> solution;
  std::size_t iterations = 0;
  /// ||A^T d - (A^T A + lambda I) p|| / ||A^T d|| at the returned iterate.
  double residual = 0.0;
  SolveStatus status = SolveStatus::max_iterations;
};

/// argmin ||A p - d||^2 + lambda ||p||^2 by conjugate gradients on
/// (A^T A + lambda I) p = A^T d. Stops at relative residual <= tol or after
/// max_iters. Ten consecutive residual increases mark the run diverged; the
/// partial iterate is still returned.
TikhonovResult tikhonov_cg(const LinearMap& a, std::span<const double> data, double lambda, std::size_t max_iters,
                           double tol);

struct TikhonovImage {
  Image image;
  std::size_t iterations = 0;
  double residual = 0.0;
  SolveStatus status = SolveStatus::max_iterations;
};

TikhonovImage tikhonov_solve(const ForwardOperator& op, const Sinogram& sino, double lambda, std::size_t max_iters,
                             double tol);

/// Largest eigenvalue of A^T A by power iteration; used to express lambda
/// relative to the operator scale.
double normal_operator_norm(const LinearMap& a, std::size_t iters = 50, std::uint64_t seed = 1);

}  // namespace oat::acoustic
