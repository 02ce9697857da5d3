#pragma once

#include <cstdint>

namespace bnl {

/// splitmix64 finalizer; derives independent stream seeds from a run seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace streams {
inline constexpr std::uint64_t kNetworkInit = 1;
inline constexpr std::uint64_t kAgent = 2;
inline constexpr std::uint64_t kEnv = 3;
inline constexpr std::uint64_t kMasks = 4;
inline constexpr std::uint64_t kEval = 5;
inline constexpr std::uint64_t kProbe = 6;
}  // namespace streams

}  // namespace bnl
