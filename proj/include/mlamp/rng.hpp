#pragma once

#include <cstdint>
#include <random>

namespace mlamp {

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of an independent stream identified by (seed, stream, substream).
/// Streams with different identifiers are decorrelated through SplitMix64,
/// so any subset of them can be generated in any order or in parallel.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t substream = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ substream);
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream,
                                   std::uint64_t substream = 0) {
  return std::mt19937_64(stream_seed(seed, stream, substream));
}

}  // namespace mlamp
