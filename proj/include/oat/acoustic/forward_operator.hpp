#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "oat/acoustic/geometry.hpp"
#include "oat/acoustic/linear_map.hpp"
#include "oat/image.hpp"

namespace oat::acoustic {

struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint64_t> row_offsets;  // rows + 1
  std::vector<std::uint32_t> col_indices;
  std::vector<double> values;

  std::size_t nnz() const noexcept { return values.size(); }
  CsrMatrix transposed() const;
};

/// Coefficients of the time-derivative matrix along one detector trace:
/// central difference inside, first-order one-sided at both ends.
struct DerivativeStencil {
  double interior_prev = 0.0;  // weight of s[k-1]
  double interior_next = 0.0;  // weight of s[k+1]
  double edge_low = 0.0;       // weight of the lower sample at k = 0 and k = N_t-1
  double edge_high = 0.0;      // weight of the upper sample

  static DerivativeStencil for_dt(double dt) noexcept;
};

/// materialized: A = D * A^s stored as one sparse matrix.
/// on_the_fly: A^s stored, D applied per trace at every call.
enum class OperatorMode { materialized, on_the_fly };

struct BuildOptions {
  Placement placement = Placement::nominal;
  OperatorMode mode = OperatorMode::on_the_fly;
  /// Downgrade the sinogram-window truncation error to a logged warning.
  bool allow_truncation = false;
};

/// Discretized optoacoustic model A = D * A^s mapping an N-pixel image to an
/// N_d x N_t sinogram. Immutable once built; apply/adjoint are safe to call
/// concurrently.
class ForwardOperator final : public LinearMap {
 public:
  ForwardOperator(ImagingGeometry geometry, Placement placement, OperatorMode mode, CsrMatrix system);

  const ImagingGeometry& geometry() const noexcept { return geometry_; }
  Placement placement() const noexcept { return placement_; }
  OperatorMode mode() const noexcept { return mode_; }
  /// The point-sensor response A^s (rows l*N_t + k, columns pixels).
  const CsrMatrix& system_matrix() const noexcept { return system_; }
  const DerivativeStencil& stencil() const noexcept { return stencil_; }
  /// Materialized A = D * A^s, built on demand for on_the_fly operators.
  CsrMatrix composite_matrix() const;

  std::size_t rows() const noexcept override { return system_.rows; }
  std::size_t cols() const noexcept override { return system_.cols; }
  void apply(std::span<const double> x, std::span<double> y) const override;
  void adjoint(std::span<const double> y, std::span<double> x) const override;

  ForwardOperator with_mode(OperatorMode mode) const;

 private:
  void derivative(std::span<const double> s, std::span<double> y) const;
  void derivative_adjoint(std::span<const double> y, std::span<double> s) const;

  ImagingGeometry geometry_;
  Placement placement_;
  OperatorMode mode_;
  DerivativeStencil stencil_;
  CsrMatrix system_;
  CsrMatrix system_t_;
  // only in materialized mode
  CsrMatrix full_;
  CsrMatrix full_t_;
};

ForwardOperator build_forward_operator(const ImagingGeometry& geometry, const BuildOptions& options = {});

/// Largest pixel-to-sensor distance over the grid corners and every sub-detector.
double max_travel_distance(const ImagingGeometry& geometry, Placement placement);

Sinogram apply_forward(const ForwardOperator& op, const Image& img);
/// Linear back-projection A^T p_d.
Image apply_adjoint(const ForwardOperator& op, const Sinogram& sino);

/// Directory with row_offsets/col_indices/values TensorFiles of A^s plus a
/// geometry.json header.
void save_operator(const ForwardOperator& op, const std::string& dir);
ForwardOperator load_operator(const std::string& dir);

}  // namespace oat::acoustic
