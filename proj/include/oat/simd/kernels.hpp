#pragma once

#include <cstddef>
#include <string_view>

// Data-parallel inner loops. Every kernel has a scalar reference version and,
// where the CPU allows it, an AVX2+FMA version. The active set is chosen once
// at startup from CPUID and can be forced with OAT_SIMD=scalar|avx2 or
// set_isa(). Tests compare each vector kernel against its scalar reference.

namespace oat::simd {

enum class Isa { scalar, avx2 };

bool isa_supported(Isa isa) noexcept;
Isa active_isa() noexcept;
/// Throws ConfigError if the ISA is not supported by this CPU/build.
void set_isa(Isa isa);
std::string_view isa_name(Isa isa) noexcept;

float dot(const float* a, const float* b, std::size_t n) noexcept;
double dot(const double* a, const double* b, std::size_t n) noexcept;

/// y += a * x
void axpy(float* y, const float* x, float a, std::size_t n) noexcept;
void axpy(double* y, const double* x, double a, std::size_t n) noexcept;

/// C[m x n] += A[m x k] * B[k x n]; row-major with leading dimensions.
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
              const float* b, std::size_t ldb, float* c, std::size_t ldc) noexcept;
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
              const double* b, std::size_t ldb, double* c, std::size_t ldc) noexcept;

namespace scalar {
float dot(const float* a, const float* b, std::size_t n) noexcept;
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(float* y, const float* x, float a, std::size_t n) noexcept;
void axpy(double* y, const double* x, double a, std::size_t n) noexcept;
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
              const float* b, std::size_t ldb, float* c, std::size_t ldc) noexcept;
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
              const double* b, std::size_t ldb, double* c, std::size_t ldc) noexcept;
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define OAT_HAVE_AVX2_KERNELS 1
namespace avx2 {
float dot(const float* a, const float* b, std::size_t n) noexcept;
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(float* y, const float* x, float a, std::size_t n) noexcept;
void axpy(double* y, const double* x, double a, std::size_t n) noexcept;
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
              const float* b, std::size_t ldb, float* c, std::size_t ldc) noexcept;
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
              const double* b, std::size_t ldb, double* c, std::size_t ldc) noexcept;
}  // namespace avx2
#else
#define OAT_HAVE_AVX2_KERNELS 0
#endif

}  // namespace oat::simd
