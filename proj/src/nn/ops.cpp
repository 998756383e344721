#include "oat/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oat/core/error.hpp"
#include "oat/core/parallel.hpp"
#include "oat/simd/kernels.hpp"

namespace oat::nn {

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
  return out + "]";
}

namespace {

void expect(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

void expect_rank(const Shape& s, std::size_t r, const char* op) {
  expect(s.size() == r, std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_string(s));
}

template <typename T>
void transpose(const T* src, std::size_t rows, std::size_t cols, T* dst) {
  constexpr std::size_t B = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += B)
    for (std::size_t j0 = 0; j0 < cols; j0 += B)
      for (std::size_t i = i0; i < std::min(rows, i0 + B); ++i)
        for (std::size_t j = j0; j < std::min(cols, j0 + B); ++j) dst[j * rows + i] = src[i * cols + j];
}

// col[(c*k + ky)*k + kx][y*W + x] = img[c][y + ky - p][x + kx - p], zero outside
template <typename T>
void im2col(const T* img, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k, T* col) {
  const auto p = static_cast<long>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < c_in; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = col + ((c * k + ky) * k + kx) * hw;
        const long dx = static_cast<long>(kx) - p;
        const long x_lo = std::max(0L, -dx), x_hi = std::min(static_cast<long>(w), static_cast<long>(w) - dx);
        for (std::size_t y = 0; y < h; ++y) {
          T* out = row + y * w;
          const long yy = static_cast<long>(y + ky) - p;
          if (yy < 0 || yy >= static_cast<long>(h) || x_lo >= x_hi) {
            std::fill(out, out + w, T(0));
            continue;
          }
          const T* src = img + (c * h + static_cast<std::size_t>(yy)) * w;
          std::fill(out, out + x_lo, T(0));
          std::copy(src + x_lo + dx, src + x_hi + dx, out + x_lo);
          std::fill(out + x_hi, out + w, T(0));
        }
      }
}

template <typename T>
void col2im_add(const T* col, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k, T* img) {
  const auto p = static_cast<long>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < c_in; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = col + ((c * k + ky) * k + kx) * hw;
        const long dx = static_cast<long>(kx) - p;
        const long x_lo = std::max(0L, -dx), x_hi = std::min(static_cast<long>(w), static_cast<long>(w) - dx);
        for (std::size_t y = 0; y < h; ++y) {
          const long yy = static_cast<long>(y + ky) - p;
          if (yy < 0 || yy >= static_cast<long>(h)) continue;
          T* dst = img + (c * h + static_cast<std::size_t>(yy)) * w;
          const T* src = row + y * w;
          for (long x = x_lo; x < x_hi; ++x) dst[x + dx] += src[x];
        }
      }
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

// one-axis factor-2 bilinear taps with half-pixel centres
struct Taps {
  std::vector<std::size_t> i0, i1;
  std::vector<double> w1;
};

Taps bilinear_taps(std::size_t in) {
  Taps t;
  const std::size_t out = 2 * in;
  t.i0.resize(out);
  t.i1.resize(out);
  t.w1.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = std::clamp((static_cast<double>(o) + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(src);
    t.i0[o] = i0;
    t.i1[o] = std::min(i0 + 1, in - 1);
    t.w1[o] = src - static_cast<double>(i0);
  }
  return t;
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, std::optional<Var> b) {
  const Shape xs = tape.shape(x), ws = tape.shape(w);
  expect_rank(xs, 4, "conv2d input");
  expect_rank(ws, 4, "conv2d weight");
  const std::size_t n = xs[0], c_in = xs[1], h = xs[2], wd = xs[3];
  const std::size_t c_out = ws[0], k = ws[2];
  expect(ws[1] == c_in && ws[3] == k && k % 2 == 1,
         "conv2d: weight " + shape_string(ws) + " incompatible with input " + shape_string(xs));
  if (b) expect(tape.shape(*b) == Shape{c_out}, "conv2d: bias shape");
  const std::size_t hw = h * wd, kk = c_in * k * k;

  Tensor<T> out({n, c_out, h, wd});
  {
    const T* xv = tape.value(x).ptr();
    const T* wv = tape.value(w).ptr();
    const T* bv = b ? tape.value(*b).ptr() : nullptr;
    T* ov = out.ptr();
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
      std::vector<T> col(k == 1 ? 0 : kk * hw);
      for (std::size_t s = begin; s < end; ++s) {
        const T* xs_ = xv + s * c_in * hw;
        T* os = ov + s * c_out * hw;
        if (bv)
          for (std::size_t c = 0; c < c_out; ++c) std::fill(os + c * hw, os + (c + 1) * hw, bv[c]);
        const T* src = xs_;
        if (k != 1) {
          im2col(xs_, c_in, h, wd, k, col.data());
          src = col.data();
        }
        simd::gemm_acc(c_out, hw, kk, wv, kk, src, hw, os, hw);
      }
    });
  }

  return tape.push(std::move(out), tape.needs_grad(x) || tape.needs_grad(w) || (b && tape.needs_grad(*b)),
                   [=](Tape<T>& t, Var self) {
                     const T* gy = t.grad(self).ptr();
                     const T* xv = t.value(x).ptr();
                     const T* wv = t.value(w).ptr();
                     const bool need_x = t.needs_grad(x), need_w = t.needs_grad(w);
                     const bool need_b = b && t.needs_grad(*b);
                     std::vector<T> wt;
                     if (need_x) {
                       wt.resize(kk * c_out);
                       transpose(wv, c_out, kk, wt.data());
                     }
                     T* gx = need_x ? t.grad(x).ptr() : nullptr;
                     const std::size_t workers = parallel_workers(n);
                     // weight gradients accumulate transposed, [kk, c_out], so the im2col
                     // matrix is consumed in place and only the small output gradient is transposed
                     std::vector<std::vector<T>> gw_part(need_w ? workers : 0, std::vector<T>(kk * c_out, T(0)));
                     std::vector<std::vector<T>> gb_part(need_b ? workers : 0, std::vector<T>(c_out, T(0)));
                     parallel_for_indexed(n, [&](std::size_t worker, std::size_t begin, std::size_t end) {
                       std::vector<T> col(k == 1 || !need_w ? 0 : kk * hw), gy_t(need_w ? hw * c_out : 0);
                       std::vector<T> dcol(k == 1 || !need_x ? 0 : kk * hw);
                       for (std::size_t s = begin; s < end; ++s) {
                         const T* gys = gy + s * c_out * hw;
                         const T* xs_ = xv + s * c_in * hw;
                         if (need_w) {
                           const T* src = xs_;
                           if (k != 1) {
                             im2col(xs_, c_in, h, wd, k, col.data());
                             src = col.data();
                           }
                           transpose(gys, c_out, hw, gy_t.data());
                           simd::gemm_acc(kk, c_out, hw, src, hw, gy_t.data(), c_out, gw_part[worker].data(), c_out);
                         }
                         if (need_b)
                           for (std::size_t c = 0; c < c_out; ++c) {
                             T acc = 0;
                             for (std::size_t i = 0; i < hw; ++i) acc += gys[c * hw + i];
                             gb_part[worker][c] += acc;
                           }
                         if (need_x) {
                           T* gxs = gx + s * c_in * hw;
                           if (k == 1) {
                             simd::gemm_acc(kk, hw, c_out, wt.data(), c_out, gys, hw, gxs, hw);
                           } else {
                             std::fill(dcol.begin(), dcol.end(), T(0));
                             simd::gemm_acc(kk, hw, c_out, wt.data(), c_out, gys, hw, dcol.data(), hw);
                             col2im_add(dcol.data(), c_in, h, wd, k, gxs);
                           }
                         }
                       }
                     });
                     if (need_w) {
                       T* gw = t.grad(w).ptr();
                       for (const auto& part : gw_part)
                         for (std::size_t r = 0; r < kk; ++r)
                           for (std::size_t o = 0; o < c_out; ++o) gw[o * kk + r] += part[r * c_out + o];
                     }
                     if (need_b) {
                       T* gb = t.grad(*b).ptr();
                       for (const auto& part : gb_part)
                         for (std::size_t i = 0; i < part.size(); ++i) gb[i] += part[i];
                     }
                   });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, std::optional<Var> b) {
  const Shape xs = tape.shape(x), ws = tape.shape(w);
  expect_rank(ws, 2, "linear weight");
  expect(!xs.empty() && xs.back() == ws[0], "linear: input " + shape_string(xs) + " vs weight " + shape_string(ws));
  const std::size_t in = ws[0], outd = ws[1], m = shape_size(xs) / in;
  if (b) expect(tape.shape(*b) == Shape{outd}, "linear: bias shape");
  Shape ys = xs;
  ys.back() = outd;
  Tensor<T> y(ys);
  if (b) {
    const T* bv = tape.value(*b).ptr();
    for (std::size_t r = 0; r < m; ++r) std::copy(bv, bv + outd, y.ptr() + r * outd);
  }
  simd::gemm_acc(m, outd, in, tape.value(x).ptr(), in, tape.value(w).ptr(), outd, y.ptr(), outd);
  return tape.push(std::move(y), tape.needs_grad(x) || tape.needs_grad(w) || (b && tape.needs_grad(*b)),
                   [=](Tape<T>& t, Var self) {
                     const T* gy = t.grad(self).ptr();
                     if (t.needs_grad(w)) {
                       std::vector<T> xt(in * m);
                       transpose(t.value(x).ptr(), m, in, xt.data());
                       simd::gemm_acc(in, outd, m, xt.data(), m, gy, outd, t.grad(w).ptr(), outd);
                     }
                     if (b && t.needs_grad(*b)) {
                       T* gb = t.grad(*b).ptr();
                       for (std::size_t r = 0; r < m; ++r)
                         for (std::size_t j = 0; j < outd; ++j) gb[j] += gy[r * outd + j];
                     }
                     if (t.needs_grad(x)) {
                       std::vector<T> wt(outd * in);
                       transpose(t.value(w).ptr(), in, outd, wt.data());
                       simd::gemm_acc(m, in, outd, gy, outd, wt.data(), in, t.grad(x).ptr(), in);
                     }
                   });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  expect(tape.shape(a) == tape.shape(b),
         "add: " + shape_string(tape.shape(a)) + " vs " + shape_string(tape.shape(b)));
  Tensor<T> y = tape.value(a);
  add_into(y, tape.value(b));
  return tape.push(std::move(y), tape.needs_grad(a) || tape.needs_grad(b), [=](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a)) add_into(t.grad(a), g);
    if (t.needs_grad(b)) add_into(t.grad(b), g);
  });
}

template <typename T>
Var add_channel(Tape<T>& tape, Var x, Var e) {
  const Shape xs = tape.shape(x);
  expect_rank(xs, 4, "add_channel");
  expect(tape.shape(e) == Shape{xs[0], xs[1]}, "add_channel: embedding shape " + shape_string(tape.shape(e)));
  const std::size_t nc = xs[0] * xs[1], hw = xs[2] * xs[3];
  Tensor<T> y = tape.value(x);
  const T* ev = tape.value(e).ptr();
  for (std::size_t i = 0; i < nc; ++i)
    for (std::size_t j = 0; j < hw; ++j) y.data[i * hw + j] += ev[i];
  return tape.push(std::move(y), tape.needs_grad(x) || tape.needs_grad(e), [=](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(x)) add_into(t.grad(x), g);
    if (t.needs_grad(e)) {
      T* ge = t.grad(e).ptr();
      for (std::size_t i = 0; i < nc; ++i) {
        T acc = 0;
        for (std::size_t j = 0; j < hw; ++j) acc += g.data[i * hw + j];
        ge[i] += acc;
      }
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T s) {
  Tensor<T> y = tape.value(x);
  for (auto& v : y.data) v *= s;
  return tape.push(std::move(y), tape.needs_grad(x), [=](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += s * g.data[i];
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  Tensor<T> y = tape.value(x);
  for (auto& v : y.data) v = v > T(0) ? v : T(0);
  return tape.push(std::move(y), tape.needs_grad(x), [=](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(x);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv.data[i] > T(0)) gx.data[i] += g.data[i];
  });
}

template <typename T>
Var silu(Tape<T>& tape, Var x) {
  Tensor<T> y = tape.value(x);
  for (auto& v : y.data) v = v / (T(1) + std::exp(-v));
  return tape.push(std::move(y), tape.needs_grad(x), [=](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(x);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T sig = T(1) / (T(1) + std::exp(-xv.data[i]));
      gx.data[i] += g.data[i] * sig * (T(1) + xv.data[i] * (T(1) - sig));
    }
  });
}

template <typename T>
Var group_norm(Tape<T>& tape, Var x, Var gamma, Var beta, std::size_t groups, T eps) {
  const Shape xs = tape.shape(x);
  expect_rank(xs, 4, "group_norm");
  const std::size_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
  expect(groups > 0 && c % groups == 0, "group_norm: " + std::to_string(c) + " channels not divisible into " +
                                            std::to_string(groups) + " groups");
  expect(tape.shape(gamma) == Shape{c} && tape.shape(beta) == Shape{c}, "group_norm: affine shape");
  const std::size_t cpg = c / groups, m = cpg * hw;
  const auto& xv = tape.value(x);
  const T* gv = tape.value(gamma).ptr();
  const T* bv = tape.value(beta).ptr();
  Tensor<T> y(xs);
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto rstd = std::make_shared<std::vector<T>>(n * groups);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t off = (s * c + g * cpg) * hw;
      double mean = 0, var = 0;
      for (std::size_t i = 0; i < m; ++i) mean += xv.data[off + i];
      mean /= static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i) {
        const double d = xv.data[off + i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const double r = 1.0 / std::sqrt(var + static_cast<double>(eps));
      (*rstd)[s * groups + g] = static_cast<T>(r);
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        const std::size_t ch = g * cpg + cc, base = off + cc * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const T xh = static_cast<T>((xv.data[base + i] - mean) * r);
          (*xhat)[base + i] = xh;
          y.data[base + i] = gv[ch] * xh + bv[ch];
        }
      }
    }
  const bool need = tape.needs_grad(x) || tape.needs_grad(gamma) || tape.needs_grad(beta);
  return tape.push(std::move(y), need, [=](Tape<T>& t, Var self) {
    const auto& gy = t.grad(self);
    const T* gv2 = t.value(gamma).ptr();
    T* ggamma = t.needs_grad(gamma) ? t.grad(gamma).ptr() : nullptr;
    T* gbeta = t.needs_grad(beta) ? t.grad(beta).ptr() : nullptr;
    T* gx = t.needs_grad(x) ? t.grad(x).ptr() : nullptr;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t off = (s * c + g * cpg) * hw;
        double sum_d = 0, sum_dx = 0;
        for (std::size_t cc = 0; cc < cpg; ++cc) {
          const std::size_t ch = g * cpg + cc, base = off + cc * hw;
          double sg = 0, sgx = 0;
          for (std::size_t i = 0; i < hw; ++i) {
            sg += gy.data[base + i];
            sgx += static_cast<double>(gy.data[base + i]) * (*xhat)[base + i];
          }
          sum_d += sg * gv2[ch];
          sum_dx += sgx * gv2[ch];
          if (ggamma) ggamma[ch] += static_cast<T>(sgx);
          if (gbeta) gbeta[ch] += static_cast<T>(sg);
        }
        if (!gx) continue;
        const double mean_d = sum_d / static_cast<double>(m), mean_dx = sum_dx / static_cast<double>(m);
        const double r = (*rstd)[s * groups + g];
        for (std::size_t cc = 0; cc < cpg; ++cc) {
          const std::size_t ch = g * cpg + cc, base = off + cc * hw;
          const T a = static_cast<T>(r * gv2[ch]), b0 = static_cast<T>(-r * mean_d), b1 = static_cast<T>(-r * mean_dx);
          for (std::size_t i = 0; i < hw; ++i) gx[base + i] += a * gy.data[base + i] + b0 + b1 * (*xhat)[base + i];
        }
      }
  });
}

template <typename T>
Var max_pool2(Tape<T>& tape, Var x) {
  const Shape xs = tape.shape(x);
  expect_rank(xs, 4, "max_pool2");
  expect(xs[2] % 2 == 0 && xs[3] % 2 == 0, "max_pool2: odd spatial size " + shape_string(xs));
  const std::size_t nc = xs[0] * xs[1], h = xs[2], w = xs[3], ho = h / 2, wo = w / 2;
  const auto& xv = tape.value(x);
  Tensor<T> y({xs[0], xs[1], ho, wo});
  auto arg = std::make_shared<std::vector<std::size_t>>(y.size());
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) {
        std::size_t best = p * h * w + 2 * i * w + 2 * j;
        for (std::size_t d : {std::size_t{1}, w, w + 1}) {
          const std::size_t idx = p * h * w + 2 * i * w + 2 * j + d;
          if (xv.data[idx] > xv.data[best]) best = idx;
        }
        const std::size_t o = (p * ho + i) * wo + j;
        (*arg)[o] = best;
        y.data[o] = xv.data[best];
      }
  return tape.push(std::move(y), tape.needs_grad(x), [=](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t o = 0; o < g.size(); ++o) gx.data[(*arg)[o]] += g.data[o];
  });
}

template <typename T>
Var avg_pool2(Tape<T>& tape, Var x) {
  const Shape xs = tape.shape(x);
  expect_rank(xs, 4, "avg_pool2");
  expect(xs[2] % 2 == 0 && xs[3] % 2 == 0, "avg_pool2: odd spatial size " + shape_string(xs));
  const std::size_t nc = xs[0] * xs[1], h = xs[2], w = xs[3], ho = h / 2, wo = w / 2;
  const auto& xv = tape.value(x);
  Tensor<T> y({xs[0], xs[1], ho, wo});
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j) {
        const T* s = xv.ptr() + p * h * w + 2 * i * w + 2 * j;
        y.data[(p * ho + i) * wo + j] = T(0.25) * (s[0] + s[1] + s[w] + s[w + 1]);
      }
  return tape.push(std::move(y), tape.needs_grad(x), [=](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t p = 0; p < nc; ++p)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          const T v = T(0.25) * g.data[(p * ho + i) * wo + j];
          T* d = gx.ptr() + p * h * w + 2 * i * w + 2 * j;
          d[0] += v;
          d[1] += v;
          d[w] += v;
          d[w + 1] += v;
        }
  });
}

template <typename T>
Var upsample_nearest2(Tape<T>& tape, Var x) {
  const Shape xs = tape.shape(x);
  expect_rank(xs, 4, "upsample_nearest2");
  const std::size_t nc = xs[0] * xs[1], h = xs[2], w = xs[3];
  const auto& xv = tape.value(x);
  Tensor<T> y({xs[0], xs[1], 2 * h, 2 * w});
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t i = 0; i < 2 * h; ++i)
      for (std::size_t j = 0; j < 2 * w; ++j) y.data[(p * 2 * h + i) * 2 * w + j] = xv.data[(p * h + i / 2) * w + j / 2];
  return tape.push(std::move(y), tape.needs_grad(x), [=](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t p = 0; p < nc; ++p)
      for (std::size_t i = 0; i < 2 * h; ++i)
        for (std::size_t j = 0; j < 2 * w; ++j) gx.data[(p * h + i / 2) * w + j / 2] += g.data[(p * 2 * h + i) * 2 * w + j];
  });
}

template <typename T>
Var upsample_bilinear2(Tape<T>& tape, Var x) {
  const Shape xs = tape.shape(x);
  expect_rank(xs, 4, "upsample_bilinear2");
  const std::size_t nc = xs[0] * xs[1], h = xs[2], w = xs[3], ho = 2 * h, wo = 2 * w;
  const auto ty = std::make_shared<Taps>(bilinear_taps(h));
  const auto tx = std::make_shared<Taps>(bilinear_taps(w));
  const auto& xv = tape.value(x);
  Tensor<T> y({xs[0], xs[1], ho, wo});
  for (std::size_t p = 0; p < nc; ++p) {
    const T* s = xv.ptr() + p * h * w;
    for (std::size_t i = 0; i < ho; ++i) {
      const T wy = static_cast<T>(ty->w1[i]);
      const T* r0 = s + ty->i0[i] * w;
      const T* r1 = s + ty->i1[i] * w;
      for (std::size_t j = 0; j < wo; ++j) {
        const T wx = static_cast<T>(tx->w1[j]);
        const T top = (T(1) - wx) * r0[tx->i0[j]] + wx * r0[tx->i1[j]];
        const T bot = (T(1) - wx) * r1[tx->i0[j]] + wx * r1[tx->i1[j]];
        y.data[(p * ho + i) * wo + j] = (T(1) - wy) * top + wy * bot;
      }
    }
  }
  return tape.push(std::move(y), tape.needs_grad(x), [=](Tape<T>& t, Var self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t p = 0; p < nc; ++p) {
      T* d = gx.ptr() + p * h * w;
      for (std::size_t i = 0; i < ho; ++i) {
        const T wy = static_cast<T>(ty->w1[i]);
        T* r0 = d + ty->i0[i] * w;
        T* r1 = d + ty->i1[i] * w;
        for (std::size_t j = 0; j < wo; ++j) {
          const T wx = static_cast<T>(tx->w1[j]);
          const T v = g.data[(p * ho + i) * wo + j];
          r0[tx->i0[j]] += (T(1) - wy) * (T(1) - wx) * v;
          r0[tx->i1[j]] += (T(1) - wy) * wx * v;
          r1[tx->i0[j]] += wy * (T(1) - wx) * v;
          r1[tx->i1[j]] += wy * wx * v;
        }
      }
    }
  });
}

template <typename T>
Var concat_channels(Tape<T>& tape, Var a, Var b) {
  const Shape as = tape.shape(a), bs = tape.shape(b);
  expect_rank(as, 4, "concat_channels");
  expect(bs.size() == 4 && as[0] == bs[0] && as[2] == bs[2] && as[3] == bs[3],
         "concat_channels: " + shape_string(as) + " vs " + shape_string(bs));
  const std::size_t n = as[0], ca = as[1], cb = bs[1], hw = as[2] * as[3];
  Tensor<T> y({n, ca + cb, as[2], as[3]});
  const T* av = tape.value(a).ptr();
  const T* bv = tape.value(b).ptr();
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(av + s * ca * hw, ca * hw, y.ptr() + s * (ca + cb) * hw);
    std::copy_n(bv + s * cb * hw, cb * hw, y.ptr() + (s * (ca + cb) + ca) * hw);
  }
  return tape.push(std::move(y), tape.needs_grad(a) || tape.needs_grad(b), [=](Tape<T>& t, Var self) {
    const T* g = t.grad(self).ptr();
    for (std::size_t s = 0; s < n; ++s) {
      if (t.needs_grad(a)) {
        T* ga = t.grad(a).ptr() + s * ca * hw;
        const T* src = g + s * (ca + cb) * hw;
        for (std::size_t i = 0; i < ca * hw; ++i) ga[i] += src[i];
      }
      if (t.needs_grad(b)) {
        T* gb = t.grad(b).ptr() + s * cb * hw;
        const T* src = g + (s * (ca + cb) + ca) * hw;
        for (std::size_t i = 0; i < cb * hw; ++i) gb[i] += src[i];
      }
    }
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  expect(shape_size(shape) == tape.value(x).size(),
         "reshape: " + shape_string(tape.shape(x)) + " to " + shape_string(shape));
  Tensor<T> y(std::move(shape), tape.value(x).data);
  return tape.push(std::move(y), tape.needs_grad(x), [=](Tape<T>& t, Var self) { add_into(t.grad(x), t.grad(self)); });
}

template <typename T>
Var to_tokens(Tape<T>& tape, Var x) {
  const Shape xs = tape.shape(x);
  expect_rank(xs, 4, "to_tokens");
  const std::size_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
  Tensor<T> y({n, hw, c});
  for (std::size_t s = 0; s < n; ++s) transpose(tape.value(x).ptr() + s * c * hw, c, hw, y.ptr() + s * c * hw);
  return tape.push(std::move(y), tape.needs_grad(x), [=](Tape<T>& t, Var self) {
    std::vector<T> tmp(c * hw);
    for (std::size_t s = 0; s < n; ++s) {
      transpose(t.grad(self).ptr() + s * c * hw, hw, c, tmp.data());
      T* gx = t.grad(x).ptr() + s * c * hw;
      for (std::size_t i = 0; i < c * hw; ++i) gx[i] += tmp[i];
    }
  });
}

template <typename T>
Var from_tokens(Tape<T>& tape, Var x, std::size_t h, std::size_t w) {
  const Shape xs = tape.shape(x);
  expect_rank(xs, 3, "from_tokens");
  expect(xs[1] == h * w, "from_tokens: token count does not match " + std::to_string(h) + "x" + std::to_string(w));
  const std::size_t n = xs[0], c = xs[2], hw = h * w;
  Tensor<T> y({n, c, h, w});
  for (std::size_t s = 0; s < n; ++s) transpose(tape.value(x).ptr() + s * c * hw, hw, c, y.ptr() + s * c * hw);
  return tape.push(std::move(y), tape.needs_grad(x), [=](Tape<T>& t, Var self) {
    std::vector<T> tmp(c * hw);
    for (std::size_t s = 0; s < n; ++s) {
      transpose(t.grad(self).ptr() + s * c * hw, c, hw, tmp.data());
      T* gx = t.grad(x).ptr() + s * c * hw;
      for (std::size_t i = 0; i < c * hw; ++i) gx[i] += tmp[i];
    }
  });
}

template <typename T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, std::size_t heads, Tensor<T>* weights) {
  const Shape qs = tape.shape(q), ks = tape.shape(k), vs = tape.shape(v);
  expect_rank(qs, 3, "attention query");
  expect(ks.size() == 3 && ks == vs && ks[0] == qs[0] && ks[2] == qs[2],
         "attention: q " + shape_string(qs) + ", k " + shape_string(ks) + ", v " + shape_string(vs));
  expect(heads > 0 && qs[2] % heads == 0, "attention: width not divisible by head count");
  const std::size_t n = qs[0], lq = qs[1], lk = ks[1], d = qs[2], dh = d / heads;
  const T inv = T(1) / std::sqrt(static_cast<T>(dh));
  const T* qv = tape.value(q).ptr();
  const T* kv = tape.value(k).ptr();
  const T* vv = tape.value(v).ptr();
  auto probs = std::make_shared<std::vector<T>>(n * heads * lq * lk);
  Tensor<T> y({n, lq, d});
  std::vector<T> logits(lk);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t hd = 0; hd < heads; ++hd)
      for (std::size_t i = 0; i < lq; ++i) {
        const T* qi = qv + (s * lq + i) * d + hd * dh;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < lk; ++j) {
          const T* kj = kv + (s * lk + j) * d + hd * dh;
          T acc = 0;
          for (std::size_t e = 0; e < dh; ++e) acc += qi[e] * kj[e];
          logits[j] = acc * inv;
          mx = std::max(mx, logits[j]);
        }
        T z = 0;
        for (std::size_t j = 0; j < lk; ++j) z += (logits[j] = std::exp(logits[j] - mx));
        T* p = probs->data() + ((s * heads + hd) * lq + i) * lk;
        T* yi = y.ptr() + (s * lq + i) * d + hd * dh;
        for (std::size_t j = 0; j < lk; ++j) {
          p[j] = logits[j] / z;
          const T* vj = vv + (s * lk + j) * d + hd * dh;
          for (std::size_t e = 0; e < dh; ++e) yi[e] += p[j] * vj[e];
        }
      }
  if (weights) *weights = Tensor<T>({n, heads, lq, lk}, *probs);
  const bool need = tape.needs_grad(q) || tape.needs_grad(k) || tape.needs_grad(v);
  return tape.push(std::move(y), need, [=](Tape<T>& t, Var self) {
    const T* gy = t.grad(self).ptr();
    const T* qv2 = t.value(q).ptr();
    const T* kv2 = t.value(k).ptr();
    const T* vv2 = t.value(v).ptr();
    T* gq = t.needs_grad(q) ? t.grad(q).ptr() : nullptr;
    T* gk = t.needs_grad(k) ? t.grad(k).ptr() : nullptr;
    T* gv = t.needs_grad(v) ? t.grad(v).ptr() : nullptr;
    std::vector<T> dp(lk);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t hd = 0; hd < heads; ++hd)
        for (std::size_t i = 0; i < lq; ++i) {
          const T* p = probs->data() + ((s * heads + hd) * lq + i) * lk;
          const T* gyi = gy + (s * lq + i) * d + hd * dh;
          T dot = 0;
          for (std::size_t j = 0; j < lk; ++j) {
            const T* vj = vv2 + (s * lk + j) * d + hd * dh;
            T acc = 0;
            for (std::size_t e = 0; e < dh; ++e) acc += gyi[e] * vj[e];
            dp[j] = acc;
            dot += acc * p[j];
            if (gv) {
              T* gvj = gv + (s * lk + j) * d + hd * dh;
              for (std::size_t e = 0; e < dh; ++e) gvj[e] += p[j] * gyi[e];
            }
          }
          const T* qi = qv2 + (s * lq + i) * d + hd * dh;
          for (std::size_t j = 0; j < lk; ++j) {
            const T ds = p[j] * (dp[j] - dot) * inv;
            if (gq) {
              const T* kj = kv2 + (s * lk + j) * d + hd * dh;
              T* gqi = gq + (s * lq + i) * d + hd * dh;
              for (std::size_t e = 0; e < dh; ++e) gqi[e] += ds * kj[e];
            }
            if (gk) {
              T* gkj = gk + (s * lk + j) * d + hd * dh;
              for (std::size_t e = 0; e < dh; ++e) gkj[e] += ds * qi[e];
            }
          }
        }
  });
}

template <typename T>
Var mse(Tape<T>& tape, Var a, Var b) {
  expect(tape.shape(a) == tape.shape(b), "mse: " + shape_string(tape.shape(a)) + " vs " + shape_string(tape.shape(b)));
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  double acc = 0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double r = static_cast<double>(av.data[i]) - bv.data[i];
    acc += r * r;
  }
  const std::size_t count = av.size();
  Tensor<T> y({1}, static_cast<T>(acc / static_cast<double>(count)));
  return tape.push(std::move(y), tape.needs_grad(a) || tape.needs_grad(b), [=](Tape<T>& t, Var self) {
    const T g = t.grad(self).data[0] * T(2) / static_cast<T>(count);
    const auto& av2 = t.value(a);
    const auto& bv2 = t.value(b);
    if (t.needs_grad(a)) {
      auto& ga = t.grad(a);
      for (std::size_t i = 0; i < count; ++i) ga.data[i] += g * (av2.data[i] - bv2.data[i]);
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad(b);
      for (std::size_t i = 0; i < count; ++i) gb.data[i] -= g * (av2.data[i] - bv2.data[i]);
    }
  });
}

template <typename T>
Var weighted_sum(Tape<T>& tape, Var x, const Tensor<T>& w) {
  expect(tape.shape(x) == w.shape, "weighted_sum: shape mismatch");
  const auto& xv = tape.value(x);
  T acc = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv.data[i] * w.data[i];
  auto wc = std::make_shared<Tensor<T>>(w);
  return tape.push(Tensor<T>({1}, acc), tape.needs_grad(x), [=](Tape<T>& t, Var self) {
    const T g = t.grad(self).data[0];
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += g * wc->data[i];
  });
}

#define OAT_INSTANTIATE_OPS(T)                                                                      \
  template Var conv2d<T>(Tape<T>&, Var, Var, std::optional<Var>);                                   \
  template Var linear<T>(Tape<T>&, Var, Var, std::optional<Var>);                                   \
  template Var add<T>(Tape<T>&, Var, Var);                                                          \
  template Var add_channel<T>(Tape<T>&, Var, Var);                                                  \
  template Var scale<T>(Tape<T>&, Var, T);                                                          \
  template Var relu<T>(Tape<T>&, Var);                                                              \
  template Var silu<T>(Tape<T>&, Var);                                                              \
  template Var group_norm<T>(Tape<T>&, Var, Var, Var, std::size_t, T);                              \
  template Var max_pool2<T>(Tape<T>&, Var);                                                         \
  template Var avg_pool2<T>(Tape<T>&, Var);                                                         \
  template Var upsample_nearest2<T>(Tape<T>&, Var);                                                 \
  template Var upsample_bilinear2<T>(Tape<T>&, Var);                                                \
  template Var concat_channels<T>(Tape<T>&, Var, Var);                                              \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                                    \
  template Var to_tokens<T>(Tape<T>&, Var);                                                         \
  template Var from_tokens<T>(Tape<T>&, Var, std::size_t, std::size_t);                             \
  template Var attention<T>(Tape<T>&, Var, Var, Var, std::size_t, Tensor<T>*);                      \
  template Var mse<T>(Tape<T>&, Var, Var);                                                          \
  template Var weighted_sum<T>(Tape<T>&, Var, const Tensor<T>&);

OAT_INSTANTIATE_OPS(float)
OAT_INSTANTIATE_OPS(double)

}  // namespace oat::nn
