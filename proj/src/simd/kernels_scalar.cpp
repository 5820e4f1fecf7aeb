#include "sbical/simd.hpp"

#include <cmath>

namespace sbical::simd::scalar {

std::size_t count_less_equal(std::span<const double> values, double threshold) {
  std::size_t count = 0;
  for (double v : values) count += (v <= threshold) ? 1 : 0;
  return count;
}

double sum(std::span<const double> values) {
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

void exp_inplace(std::span<double> values) {
  for (double& v : values) v = std::exp(v);
}

double gaussian_kernel_sum(std::span<const double> samples, std::size_t n,
                           std::span<const double> point,
                           std::span<const double> inv_bandwidth) {
  const std::size_t d = point.size();
  double total = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    double q = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double z = (point[j] - samples[j * n + l]) * inv_bandwidth[j];
      q += z * z;
    }
    total += std::exp(-0.5 * q);
  }
  return total;
}

}  // namespace sbical::simd::scalar
