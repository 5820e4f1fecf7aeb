#pragma once

#include "sbical/types.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace sbical {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t z);

// Independent stream seed for (base, tag, index). Tags are short literals
// naming the consumer ("calibration", "cdf-draws", ...).
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0);

// Hash of the exact bit patterns of `values`; used to give per-observation
// randomness that does not depend on query order.
std::uint64_t hash_values(std::span<const double> values);
std::uint64_t hash_vector(const Vector& v);

Rng make_rng(std::uint64_t seed);

double standard_normal(Rng& rng);
double uniform01(Rng& rng);

}  // namespace sbical
