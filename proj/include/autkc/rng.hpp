#pragma once

// Seed splitting. Every random component draws from its own std::mt19937_64
// whose seed is derived from (root seed, stream id, index) by SplitMix64, so
// independent parts of an experiment never share a generator.

#include <cstdint>
#include <random>

namespace autkc {

enum class Stream : std::uint64_t {
  DataWeights = 1,
  DataFeatures = 2,
  DataLabels = 3,
  SplitShuffle = 4,
  ModelInit = 5,
  EpochShuffle = 6,
  EtaDraw = 7,
  Restart = 8,
  ScoreSample = 9,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream))) + index);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return std::mt19937_64(derive_seed(seed, stream, index));
}

}  // namespace autkc
