#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fedtraj {

// All randomness in the project flows from one experiment seed through
// labeled sub-streams, so independent stages (data generation, init,
// sampling, dropout, ...) stay reproducible no matter what runs between
// them. Sub-seeds are FNV-1a over the label mixed into the base seed.
inline std::uint64_t sub_seed(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ull ^ (seed * 0x9e3779b97f4a7c15ull);
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  // splitmix finalizer; FNV alone has weak low bits
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return h;
}

using rng_t = std::mt19937_64;

inline rng_t make_rng(std::uint64_t seed, std::string_view label) {
  return rng_t(sub_seed(seed, label));
}

// std::uniform_*_distribution is implementation-defined; these helpers keep
// bit-level reproducibility across standard libraries.
inline double u01(rng_t& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::uint64_t uniform_index(rng_t& rng, std::uint64_t n) {
  // unbiased bounded draw by rejection
  const std::uint64_t limit = ~0ull - (~0ull % n + 1) % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x > limit);
  return x % n;
}

inline double uniform_range(rng_t& rng, double lo, double hi) {
  return lo + (hi - lo) * u01(rng);
}

template <typename T>
void shuffle_inplace(std::vector<T>& v, rng_t& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace fedtraj
