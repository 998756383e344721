#pragma once

#include <cstddef>
#include <span>

namespace oat::acoustic {

/// Real linear map y = A x with its exact transpose.
class LinearMap {
 public:
  virtual ~LinearMap() = default;
  virtual std::size_t rows() const noexcept = 0;
  virtual std::size_t cols() const noexcept = 0;
  /// y = A x; x has cols() entries, y has rows().
  virtual void apply(std::span<const double> x, std::span<double> y) const = 0;
  /// x = A^T y
  virtual void adjoint(std::span<const double> y, std::span<double> x) const = 0;
};

}  // namespace oat::acoustic
