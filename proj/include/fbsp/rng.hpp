#pragma once

#include <cstdint>
#include <initializer_list>

namespace fbsp {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Per-item seed from a base seed and indices; independent of visit order.
constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t v : path) h = mix64(h ^ mix64(v + 0x632BE59BD9B4E019ull));
  return h;
}

}  // namespace fbsp
