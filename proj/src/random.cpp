#include "sbical/random.hpp"

#include <bit>
#include <cstring>

namespace sbical {

void require_dim(const char* what, Eigen::Index got, Eigen::Index expected) {
  if (got != expected) {
    throw DimensionMismatch(std::string(what) + ": expected dimension " + std::to_string(expected) +
                            ", got " + std::to_string(got));
  }
}

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index) {
  // FNV-1a over the tag, folded with the base and index through splitmix.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix64(mix64(base ^ h) + index);
}

std::uint64_t hash_values(std::span<const double> values) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (double v : values) {
    // -0.0 and 0.0 describe the same observation.
    const double canonical = (v == 0.0) ? 0.0 : v;
    h = mix64(h ^ std::bit_cast<std::uint64_t>(canonical));
  }
  return h;
}

std::uint64_t hash_vector(const Vector& v) {
  return hash_values(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

Rng make_rng(std::uint64_t seed) { return Rng(seed); }

double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

}  // namespace sbical
