#pragma once

#include <cstdint>
#include <random>

namespace lktseq::rng {

inline std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Uniform on [0, 1) from the top 53 bits.
inline double Uniform(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Uniform index in [0, n) by rejection, independent of the standard
/// library's distribution implementations.
inline std::size_t Index(std::mt19937_64& gen, std::size_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v = gen();
  while (v >= limit) v = gen();
  return static_cast<std::size_t>(v % n);
}

}  // namespace lktseq::rng
