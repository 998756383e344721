#include <atomic>
#include <cstdlib>
#include <cstring>

#include "oat/core/error.hpp"
#include "oat/simd/kernels.hpp"

namespace oat::simd {
namespace {

Isa detect() noexcept {
  if (const char* env = std::getenv("OAT_SIMD")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
  }
  return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() noexcept {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

bool isa_supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if OAT_HAVE_AVX2_KERNELS && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) throw ConfigError("SIMD ISA not supported: " + std::string(isa_name(isa)));
  current().store(isa);
}

std::string_view isa_name(Isa isa) noexcept { return isa == Isa::avx2 ? "avx2" : "scalar"; }

#if OAT_HAVE_AVX2_KERNELS
#define OAT_DISPATCH(call)                                \
  do {                                                    \
    if (active_isa() == Isa::avx2) return avx2::call;     \
    return scalar::call;                                  \
  } while (0)
#else
#define OAT_DISPATCH(call) return scalar::call
#endif

float dot(const float* a, const float* b, std::size_t n) noexcept { OAT_DISPATCH(dot(a, b, n)); }
double dot(const double* a, const double* b, std::size_t n) noexcept { OAT_DISPATCH(dot(a, b, n)); }
void axpy(float* y, const float* x, float a, std::size_t n) noexcept { OAT_DISPATCH(axpy(y, x, a, n)); }
void axpy(double* y, const double* x, double a, std::size_t n) noexcept { OAT_DISPATCH(axpy(y, x, a, n)); }

void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
              const float* b, std::size_t ldb, float* c, std::size_t ldc) noexcept {
  OAT_DISPATCH(gemm_acc(m, n, k, a, lda, b, ldb, c, ldc));
}
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
              const double* b, std::size_t ldb, double* c, std::size_t ldc) noexcept {
  OAT_DISPATCH(gemm_acc(m, n, k, a, lda, b, ldb, c, ldc));
}

}  // namespace oat::simd
