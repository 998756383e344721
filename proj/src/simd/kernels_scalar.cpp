#include "oat/simd/kernels.hpp"

namespace oat::simd::scalar {
namespace {

template <class T>
T dot_impl(const T* a, const T* b, std::size_t n) noexcept {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <class T>
void axpy_impl(T* y, const T* x, T a, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
void gemm_impl(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
               std::size_t ldb, T* c, std::size_t ldc) noexcept {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * lda + p];
      const T* bp = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

}  // namespace

float dot(const float* a, const float* b, std::size_t n) noexcept { return dot_impl(a, b, n); }
double dot(const double* a, const double* b, std::size_t n) noexcept { return dot_impl(a, b, n); }
void axpy(float* y, const float* x, float a, std::size_t n) noexcept { axpy_impl(y, x, a, n); }
void axpy(double* y, const double* x, double a, std::size_t n) noexcept { axpy_impl(y, x, a, n); }

void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
              const float* b, std::size_t ldb, float* c, std::size_t ldc) noexcept {
  gemm_impl(m, n, k, a, lda, b, ldb, c, ldc);
}
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
              const double* b, std::size_t ldb, double* c, std::size_t ldc) noexcept {
  gemm_impl(m, n, k, a, lda, b, ldb, c, ldc);
}

}  // namespace oat::simd::scalar
