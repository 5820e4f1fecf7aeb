// Compiled with -mavx2 -mfma; never called unless CPUID reports both.
#include "sbical/simd.hpp"

#include <immintrin.h>

#include <cmath>
#include <cstdint>

namespace sbical::simd::avx2 {
namespace {

// Cephes-style exp: range reduction by ln2, (3,4) Pade approximant on
// [-ln2/2, ln2/2], then scaling by 2^n in two steps so that results in the
// subnormal range are still produced by a multiply.
inline __m256d exp4(__m256d x) {
  const __m256d hi = _mm256_set1_pd(709.782712893384);
  const __m256d lo = _mm256_set1_pd(-745.1332191019412);
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125E-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212E-6);

  const __m256d overflow = _mm256_cmp_pd(x, hi, _CMP_GT_OQ);
  const __m256d underflow = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  const __m256d nan_mask = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  __m256d v = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  const __m256d fx = _mm256_round_pd(_mm256_mul_pd(v, log2e),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  v = _mm256_fnmadd_pd(fx, c1, v);
  v = _mm256_fnmadd_pd(fx, c2, v);

  const __m256d xx = _mm256_mul_pd(v, v);
  __m256d px = _mm256_set1_pd(1.26177193074810590878E-4);
  px = _mm256_fmadd_pd(px, xx, _mm256_set1_pd(3.02994407707441961300E-2));
  px = _mm256_fmadd_pd(px, xx, _mm256_set1_pd(9.99999999999999999910E-1));
  px = _mm256_mul_pd(px, v);
  __m256d qx = _mm256_set1_pd(3.00198505138664455042E-6);
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.52448340349684104192E-3));
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.27265548208155028766E-1));
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.00000000000000000009E0));
  __m256d r = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  r = _mm256_fmadd_pd(_mm256_set1_pd(2.0), r, _mm256_set1_pd(1.0));

  // n = n1 + n2 with both halves inside the normal exponent range.
  const __m256d n1 = _mm256_floor_pd(_mm256_mul_pd(fx, _mm256_set1_pd(0.5)));
  const __m256d n2 = _mm256_sub_pd(fx, n1);
  const __m256d magic = _mm256_set1_pd(4503599627370496.0);  // 2^52
  const __m256d bias = _mm256_set1_pd(1023.0);
  const __m256i e1 = _mm256_slli_epi64(
      _mm256_castpd_si256(_mm256_add_pd(_mm256_add_pd(n1, bias), magic)), 52);
  const __m256i e2 = _mm256_slli_epi64(
      _mm256_castpd_si256(_mm256_add_pd(_mm256_add_pd(n2, bias), magic)), 52);
  r = _mm256_mul_pd(r, _mm256_castsi256_pd(e1));
  r = _mm256_mul_pd(r, _mm256_castsi256_pd(e2));

  r = _mm256_blendv_pd(r, _mm256_set1_pd(HUGE_VAL), overflow);
  r = _mm256_blendv_pd(r, _mm256_setzero_pd(), underflow);
  r = _mm256_blendv_pd(r, x, nan_mask);
  return r;
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

std::size_t count_less_equal(std::span<const double> values, double threshold) {
  const std::size_t n = values.size();
  const double* p = values.data();
  const __m256d t = _mm256_set1_pd(threshold);
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const int mask = _mm256_movemask_pd(_mm256_cmp_pd(_mm256_loadu_pd(p + i), t, _CMP_LE_OQ));
    count += static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(mask)));
  }
  for (; i < n; ++i) count += (p[i] <= threshold) ? 1 : 0;
  return count;
}

double sum(std::span<const double> values) {
  const std::size_t n = values.size();
  const double* p = values.data();
  __m256d a0 = _mm256_setzero_pd();
  __m256d a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_add_pd(a0, _mm256_loadu_pd(p + i));
    a1 = _mm256_add_pd(a1, _mm256_loadu_pd(p + i + 4));
  }
  for (; i + 4 <= n; i += 4) a0 = _mm256_add_pd(a0, _mm256_loadu_pd(p + i));
  double total = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) total += p[i];
  return total;
}

void exp_inplace(std::span<double> values) {
  const std::size_t n = values.size();
  double* p = values.data();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(p + i, exp4(_mm256_loadu_pd(p + i)));
  if (i < n) {
    alignas(32) double tail[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t k = i; k < n; ++k) tail[k - i] = p[k];
    _mm256_store_pd(tail, exp4(_mm256_load_pd(tail)));
    for (std::size_t k = i; k < n; ++k) p[k] = tail[k - i];
  }
}

double gaussian_kernel_sum(std::span<const double> samples, std::size_t n,
                           std::span<const double> point,
                           std::span<const double> inv_bandwidth) {
  const std::size_t d = point.size();
  const double* s = samples.data();
  const __m256d minus_half = _mm256_set1_pd(-0.5);
  __m256d acc = _mm256_setzero_pd();
  std::size_t l = 0;
  for (; l + 4 <= n; l += 4) {
    __m256d q = _mm256_setzero_pd();
    for (std::size_t j = 0; j < d; ++j) {
      const __m256d diff = _mm256_sub_pd(_mm256_set1_pd(point[j]), _mm256_loadu_pd(s + j * n + l));
      const __m256d z = _mm256_mul_pd(diff, _mm256_set1_pd(inv_bandwidth[j]));
      q = _mm256_fmadd_pd(z, z, q);
    }
    acc = _mm256_add_pd(acc, exp4(_mm256_mul_pd(q, minus_half)));
  }
  if (l < n) {
    // Padding lanes get +inf exponent argument, i.e. exp(-inf) = 0.
    alignas(32) double q_tail[4] = {HUGE_VAL, HUGE_VAL, HUGE_VAL, HUGE_VAL};
    for (std::size_t k = l; k < n; ++k) {
      double q = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double z = (point[j] - s[j * n + k]) * inv_bandwidth[j];
        q = std::fma(z, z, q);
      }
      q_tail[k - l] = q;
    }
    acc = _mm256_add_pd(acc, exp4(_mm256_mul_pd(_mm256_load_pd(q_tail), minus_half)));
  }
  return hsum(acc);
}

}  // namespace sbical::simd::avx2
