#include "sbical/simd.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace sbical::simd {
namespace {

Isa detect() {
  if (const char* env = std::getenv("SBICAL_SIMD")) {
    if (std::string(env) == "scalar") return Isa::Scalar;
  }
  return isa_available(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(SBICAL_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw std::runtime_error("simd: instruction set '" + std::string(isa_name(isa)) +
                             "' is not available on this CPU");
  }
  active().store(isa, std::memory_order_relaxed);
}

#if defined(SBICAL_HAVE_AVX2_KERNELS)
#define SBICAL_DISPATCH(fn, ...)                                  \
  (active_isa() == Isa::Avx2 ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__))
#else
#define SBICAL_DISPATCH(fn, ...) scalar::fn(__VA_ARGS__)
#endif

std::size_t count_less_equal(std::span<const double> values, double threshold) {
  return SBICAL_DISPATCH(count_less_equal, values, threshold);
}

double sum(std::span<const double> values) { return SBICAL_DISPATCH(sum, values); }

void exp_inplace(std::span<double> values) { SBICAL_DISPATCH(exp_inplace, values); }

double gaussian_kernel_sum(std::span<const double> samples, std::size_t n,
                           std::span<const double> point,
                           std::span<const double> inv_bandwidth) {
  return SBICAL_DISPATCH(gaussian_kernel_sum, samples, n, point, inv_bandwidth);
}

}  // namespace sbical::simd
