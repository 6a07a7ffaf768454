#pragma once

#include <cstdint>
#include <random>

namespace qwalk {

/// splitmix64 mixer; used to derive independent stream seeds from one master
/// seed so that draws do not depend on thread scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Deterministic engine for stream `stream_id` of master seed `seed`.
inline std::mt19937_64 seeded_stream(std::uint64_t seed, std::uint64_t stream_id) {
  const std::uint64_t s = splitmix64(seed ^ splitmix64(stream_id));
  return std::mt19937_64(s);
}

}  // namespace qwalk
