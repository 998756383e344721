#include "oat/acoustic/forward_operator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "oat/core/error.hpp"
#include "oat/core/parallel.hpp"
#include "oat/io/tensor_file.hpp"

namespace oat::acoustic {

CsrMatrix CsrMatrix::transposed() const {
  CsrMatrix t;
  t.rows = cols;
  t.cols = rows;
  t.row_offsets.assign(cols + 1, 0);
  for (auto c : col_indices) ++t.row_offsets[c + 1];
  for (std::size_t i = 0; i < cols; ++i) t.row_offsets[i + 1] += t.row_offsets[i];
  t.col_indices.resize(nnz());
  t.values.resize(nnz());
  std::vector<std::uint64_t> cursor(t.row_offsets.begin(), t.row_offsets.end() - 1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (auto e = row_offsets[r]; e < row_offsets[r + 1]; ++e) {
      const auto dst = cursor[col_indices[e]]++;
      t.col_indices[dst] = static_cast<std::uint32_t>(r);
      t.values[dst] = values[e];
    }
  }
  return t;
}

DerivativeStencil DerivativeStencil::for_dt(double dt) noexcept {
  return {-1.0 / (2.0 * dt), 1.0 / (2.0 * dt), -1.0 / dt, 1.0 / dt};
}

namespace {

void spmv(const CsrMatrix& m, std::span<const double> x, std::span<double> y) {
  parallel_for(m.rows, [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      double s = 0.0;
      for (auto k = m.row_offsets[r]; k < m.row_offsets[r + 1]; ++k) s += m.values[k] * x[m.col_indices[k]];
      y[r] = s;
    }
  });
}

// a*row_a + b*row_b for two column-sorted sparse rows
void merge_rows(const CsrMatrix& m, std::size_t ra, double a, std::size_t rb, double b,
                std::vector<std::uint32_t>& cols, std::vector<double>& vals) {
  auto ia = m.row_offsets[ra], ea = m.row_offsets[ra + 1];
  auto ib = m.row_offsets[rb], eb = m.row_offsets[rb + 1];
  while (ia < ea || ib < eb) {
    if (ib >= eb || (ia < ea && m.col_indices[ia] < m.col_indices[ib])) {
      cols.push_back(m.col_indices[ia]);
      vals.push_back(a * m.values[ia]);
      ++ia;
    } else if (ia >= ea || m.col_indices[ib] < m.col_indices[ia]) {
      cols.push_back(m.col_indices[ib]);
      vals.push_back(b * m.values[ib]);
      ++ib;
    } else {
      cols.push_back(m.col_indices[ia]);
      vals.push_back(a * m.values[ia] + b * m.values[ib]);
      ++ia;
      ++ib;
    }
  }
}

void check_len(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw ShapeError(std::string(what) + ": expected " + std::to_string(want) + " values, got " + std::to_string(got));
}

}  // namespace

ForwardOperator::ForwardOperator(ImagingGeometry geometry, Placement placement, OperatorMode mode, CsrMatrix system)
    : geometry_(std::move(geometry)),
      placement_(placement),
      mode_(mode),
      stencil_(DerivativeStencil::for_dt(geometry_.dt)),
      system_(std::move(system)) {
  if (system_.rows != geometry_.sinogram_size() || system_.cols != geometry_.pixel_count())
    throw ShapeError("system matrix shape does not match geometry");
  if (mode_ == OperatorMode::materialized) {
    full_ = composite_matrix();
    full_t_ = full_.transposed();
  } else {
    system_t_ = system_.transposed();
  }
}

CsrMatrix ForwardOperator::composite_matrix() const {
  const std::size_t nt = geometry_.time_samples;
  const std::size_t nd = geometry_.detector_count;
  CsrMatrix a;
  a.rows = system_.rows;
  a.cols = system_.cols;
  a.row_offsets.reserve(a.rows + 1);
  a.row_offsets.push_back(0);
  for (std::size_t l = 0; l < nd; ++l) {
    const std::size_t base = l * nt;
    for (std::size_t k = 0; k < nt; ++k) {
      if (k == 0) {
        merge_rows(system_, base + 1, stencil_.edge_high, base, stencil_.edge_low, a.col_indices, a.values);
      } else if (k == nt - 1) {
        merge_rows(system_, base + k, stencil_.edge_high, base + k - 1, stencil_.edge_low, a.col_indices, a.values);
      } else {
        merge_rows(system_, base + k + 1, stencil_.interior_next, base + k - 1, stencil_.interior_prev,
                   a.col_indices, a.values);
      }
      a.row_offsets.push_back(a.values.size());
    }
  }
  return a;
}

void ForwardOperator::derivative(std::span<const double> s, std::span<double> y) const {
  const std::size_t nt = geometry_.time_samples;
  parallel_for(geometry_.detector_count, [&](std::size_t b, std::size_t e) {
    for (std::size_t l = b; l < e; ++l) {
      const double* sl = s.data() + l * nt;
      double* yl = y.data() + l * nt;
      yl[0] = stencil_.edge_high * sl[1] + stencil_.edge_low * sl[0];
      for (std::size_t k = 1; k + 1 < nt; ++k)
        yl[k] = stencil_.interior_next * sl[k + 1] + stencil_.interior_prev * sl[k - 1];
      yl[nt - 1] = stencil_.edge_high * sl[nt - 1] + stencil_.edge_low * sl[nt - 2];
    }
  });
}

void ForwardOperator::derivative_adjoint(std::span<const double> y, std::span<double> s) const {
  const std::size_t nt = geometry_.time_samples;
  parallel_for(geometry_.detector_count, [&](std::size_t b, std::size_t e) {
    for (std::size_t l = b; l < e; ++l) {
      const double* yl = y.data() + l * nt;
      double* sl = s.data() + l * nt;
      std::fill(sl, sl + nt, 0.0);
      sl[1] += stencil_.edge_high * yl[0];
      sl[0] += stencil_.edge_low * yl[0];
      for (std::size_t k = 1; k + 1 < nt; ++k) {
        sl[k + 1] += stencil_.interior_next * yl[k];
        sl[k - 1] += stencil_.interior_prev * yl[k];
      }
      sl[nt - 1] += stencil_.edge_high * yl[nt - 1];
      sl[nt - 2] += stencil_.edge_low * yl[nt - 1];
    }
  });
}

void ForwardOperator::apply(std::span<const double> x, std::span<double> y) const {
  check_len(x.size(), cols(), "apply: image");
  check_len(y.size(), rows(), "apply: sinogram");
  if (mode_ == OperatorMode::materialized) {
    spmv(full_, x, y);
    return;
  }
  std::vector<double> s(rows());
  spmv(system_, x, s);
  derivative(s, y);
}

void ForwardOperator::adjoint(std::span<const double> y, std::span<double> x) const {
  check_len(y.size(), rows(), "adjoint: sinogram");
  check_len(x.size(), cols(), "adjoint: image");
  if (mode_ == OperatorMode::materialized) {
    spmv(full_t_, y, x);
    return;
  }
  std::vector<double> s(rows());
  derivative_adjoint(y, s);
  spmv(system_t_, s, x);
}

ForwardOperator ForwardOperator::with_mode(OperatorMode mode) const {
  return ForwardOperator(geometry_, placement_, mode, system_);
}

double max_travel_distance(const ImagingGeometry& g, Placement placement) {
  const auto pts = sensor_points(g, placement);
  const Vec2 corners[4] = {pixel_center(g, 0, 0), pixel_center(g, g.grid_nx - 1, 0),
                           pixel_center(g, 0, g.grid_ny - 1), pixel_center(g, g.grid_nx - 1, g.grid_ny - 1)};
  double best = 0.0;
  for (const auto& p : pts)
    for (const auto& c : corners) best = std::max(best, std::sqrt((p.x - c.x) * (p.x - c.x) + (p.y - c.y) * (p.y - c.y)));
  return best;
}

ForwardOperator build_forward_operator(const ImagingGeometry& g, const BuildOptions& options) {
  g.validate();
  if (g.ring_radius <= g.half_diagonal())
    throw ConfigError("geometry: detector ring radius does not clear the image region");
  const double window = static_cast<double>(g.time_samples) * g.dt * g.sound_speed;
  const double reach = max_travel_distance(g, options.placement);
  if (window < reach) {
    const std::string msg = "sinogram window (" + std::to_string(window) + " m) is shorter than the largest travel distance (" +
                            std::to_string(reach) + " m); late arrivals are truncated";
    if (!options.allow_truncation) throw TruncationError(msg);
    spdlog::warn("{}", msg);
  }

  const std::size_t nd = g.detector_count;
  const std::size_t nt = g.time_samples;
  const std::size_t sub = g.sir_subelements;
  const std::size_t npix = g.pixel_count();
  const auto pts = sensor_points(g, options.placement);
  std::vector<Vec2> pix(npix);
  for (std::size_t iy = 0; iy < g.grid_ny; ++iy)
    for (std::size_t ix = 0; ix < g.grid_nx; ++ix) pix[iy * g.grid_nx + ix] = pixel_center(g, ix, iy);

  const double v = g.sound_speed;
  const double dt = g.dt;
  const double coeff = (1.0 / (4.0 * std::numbers::pi * v * v)) * (g.voxel_volume() / (dt * dt));

  struct Entry {
    std::uint32_t k;
    std::uint32_t j;
    double value;
  };
  std::vector<std::vector<Entry>> per_detector(nd);
  parallel_for(nd, [&](std::size_t lb, std::size_t le) {
    for (std::size_t l = lb; l < le; ++l) {
      auto& entries = per_detector[l];
      entries.reserve(npix * std::min<std::size_t>(sub, 4));
      std::vector<std::pair<std::uint32_t, double>> acc;
      for (std::size_t j = 0; j < npix; ++j) {
        acc.clear();
        for (std::size_t s = 0; s < sub; ++s) {
          const Vec2 p = pts[l * sub + s];
          const double dx = p.x - pix[j].x;
          const double dy = p.y - pix[j].y;
          const double dist = std::sqrt(dx * dx + dy * dy);
          const double tau = dist / v;
          const auto centre = static_cast<long long>(std::floor(tau / dt + 0.5));
          for (long long k = centre - 1; k <= centre + 1; ++k) {
            if (k < 0 || k >= static_cast<long long>(nt)) continue;
            if (!(std::abs(static_cast<double>(k) * dt - tau) < 0.5 * dt)) continue;
            const double term = coeff / dist;
            auto it = std::find_if(acc.begin(), acc.end(), [k](const auto& a) { return a.first == k; });
            if (it == acc.end()) acc.emplace_back(static_cast<std::uint32_t>(k), 0.0 + term);
            else it->second += term;
          }
        }
        for (const auto& [k, total] : acc)
          entries.push_back({k, static_cast<std::uint32_t>(j), total / static_cast<double>(sub)});
      }
      std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.k < b.k; });
    }
  });

  CsrMatrix m;
  m.rows = nd * nt;
  m.cols = npix;
  m.row_offsets.assign(m.rows + 1, 0);
  std::size_t total = 0;
  for (const auto& e : per_detector) total += e.size();
  m.col_indices.reserve(total);
  m.values.reserve(total);
  for (std::size_t l = 0; l < nd; ++l) {
    for (const auto& e : per_detector[l]) {
      ++m.row_offsets[l * nt + e.k + 1];
      m.col_indices.push_back(e.j);
      m.values.push_back(e.value);
    }
  }
  for (std::size_t r = 0; r < m.rows; ++r) m.row_offsets[r + 1] += m.row_offsets[r];
  return ForwardOperator(g, options.placement, options.mode, std::move(m));
}

Sinogram apply_forward(const ForwardOperator& op, const Image& img) {
  const auto& g = op.geometry();
  if (img.width != g.grid_nx || img.height != g.grid_ny)
    throw ShapeError("apply_forward: image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                     ", geometry expects " + std::to_string(g.grid_nx) + "x" + std::to_string(g.grid_ny));
  Sinogram out(g.detector_count, g.time_samples);
  out.geometry_id = g.id();
  op.apply(img.pixels, out.data);
  return out;
}

Image apply_adjoint(const ForwardOperator& op, const Sinogram& sino) {
  const auto& g = op.geometry();
  if (sino.detectors != g.detector_count || sino.samples != g.time_samples || sino.data.size() != op.rows())
    throw ShapeError("apply_adjoint: sinogram shape does not match geometry");
  Image out(g.grid_nx, g.grid_ny);
  op.adjoint(sino.data, out.pixels);
  return out;
}

void save_operator(const ForwardOperator& op, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto& m = op.system_matrix();
  std::vector<double> offsets(m.row_offsets.begin(), m.row_offsets.end());
  std::vector<double> cols(m.col_indices.begin(), m.col_indices.end());
  const std::uint64_t d_off[1] = {offsets.size()};
  const std::uint64_t d_nnz[1] = {m.nnz()};
  io::write_tensor(dir + "/row_offsets.oatd", offsets, d_off);
  io::write_tensor(dir + "/col_indices.oatd", cols, d_nnz);
  io::write_tensor(dir + "/values.oatd", m.values, d_nnz);
  nlohmann::json header{{"geometry", op.geometry()},
                        {"placement", op.placement() == Placement::jittered ? "jittered" : "nominal"},
                        {"mode", op.mode() == OperatorMode::materialized ? "materialized" : "on_the_fly"},
                        {"rows", m.rows},
                        {"cols", m.cols}};
  const std::string text = header.dump(2);
  io::write_file_bytes(dir + "/geometry.json",
                       std::span(reinterpret_cast<const std::byte*>(text.data()), text.size()));
}

ForwardOperator load_operator(const std::string& dir) {
  const auto bytes = io::read_file_bytes(dir + "/geometry.json");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(dir + "/geometry.json: " + e.what());
  }
  ImagingGeometry g = header.at("geometry").get<ImagingGeometry>();
  const auto placement = header.at("placement") == "jittered" ? Placement::jittered : Placement::nominal;
  const auto mode = header.at("mode") == "materialized" ? OperatorMode::materialized : OperatorMode::on_the_fly;
  CsrMatrix m;
  m.rows = header.at("rows").get<std::size_t>();
  m.cols = header.at("cols").get<std::size_t>();
  const auto offsets = io::read_tensor(dir + "/row_offsets.oatd").as_f64();
  const auto cols = io::read_tensor(dir + "/col_indices.oatd").as_f64();
  m.values = io::read_tensor(dir + "/values.oatd").as_f64();
  if (offsets.size() != m.rows + 1 || cols.size() != m.values.size() || offsets.back() != static_cast<double>(m.values.size()))
    throw IoError(dir + ": inconsistent sparse arrays");
  m.row_offsets.assign(offsets.begin(), offsets.end());
  m.col_indices.reserve(cols.size());
  for (double c : cols) {
    if (!(c >= 0 && c < static_cast<double>(m.cols))) throw IoError(dir + ": column index out of range");
    m.col_indices.push_back(static_cast<std::uint32_t>(c));
  }
  return ForwardOperator(std::move(g), placement, mode, std::move(m));
}

}  // namespace oat::acoustic
