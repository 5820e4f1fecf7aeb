#pragma once

// Data-parallel inner loops used by the score, grid-posterior and ECDF code.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The active variant is picked once at first use from
// CPUID; SBICAL_SIMD=scalar in the environment pins the scalar path.
// The AVX2 variants are equivalence-tested against the scalar ones.

#include <cstddef>
#include <span>
#include <string_view>

namespace sbical::simd {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);
bool isa_available(Isa isa);
Isa active_isa();
// Overrides the CPUID choice; throws if `isa` is not available.
void force_isa(Isa isa);

// #{ i : values[i] <= threshold }
std::size_t count_less_equal(std::span<const double> values, double threshold);

double sum(std::span<const double> values);

// values[i] <- exp(values[i])
void exp_inplace(std::span<double> values);

// Sum over samples l of exp(-0.5 * sum_j ((point[j] - samples[j*n + l]) * inv_bandwidth[j])^2).
// `samples` is column-major [n x d]: coordinate j of every sample is contiguous.
double gaussian_kernel_sum(std::span<const double> samples, std::size_t n,
                           std::span<const double> point,
                           std::span<const double> inv_bandwidth);

namespace scalar {
std::size_t count_less_equal(std::span<const double> values, double threshold);
double sum(std::span<const double> values);
void exp_inplace(std::span<double> values);
double gaussian_kernel_sum(std::span<const double> samples, std::size_t n,
                           std::span<const double> point,
                           std::span<const double> inv_bandwidth);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define SBICAL_HAVE_AVX2_KERNELS 1
// Only call these when isa_available(Isa::Avx2) is true.
namespace avx2 {
std::size_t count_less_equal(std::span<const double> values, double threshold);
double sum(std::span<const double> values);
void exp_inplace(std::span<double> values);
double gaussian_kernel_sum(std::span<const double> samples, std::size_t n,
                           std::span<const double> point,
                           std::span<const double> inv_bandwidth);
}  // namespace avx2
#endif

}  // namespace sbical::simd
