#pragma once

#include <cstdint>
#include <vector>

namespace snet::rng {

// splitmix64 finalizer.
inline std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// One independent draw per (seed, index). Decisions are order-independent:
// the value depends only on the pair, never on how many draws came before.
inline std::uint64_t stream(std::uint64_t seed, std::uint64_t index) {
  return mix(mix(seed) + 0x9e3779b97f4a7c15ULL * (index + 1));
}

// Uniform double in [0, 1).
inline double uniform(std::uint64_t seed, std::uint64_t index) {
  return static_cast<double>(stream(seed, index) >> 11) * 0x1.0p-53;
}

// Uniform double in [-bound, bound).
inline double uniform_symmetric(std::uint64_t seed, std::uint64_t index,
                                double bound) {
  return (2.0 * uniform(seed, index) - 1.0) * bound;
}

// Derive a child seed from a parent seed and a tag (e.g. trial index).
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
  return mix(seed ^ mix(tag + 0x5851f42d4c957f2dULL));
}

// Deterministic Fisher-Yates permutation of {0, ..., n-1}.
inline std::vector<std::uint32_t> permutation(std::size_t n,
                                              std::uint64_t seed) {
  std::vector<std::uint32_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = n; i > 1; --i) {
    // Unbiased enough at these sizes; deterministic across platforms.
    std::uint64_t j = stream(seed, i - 1) % i;
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace snet::rng
