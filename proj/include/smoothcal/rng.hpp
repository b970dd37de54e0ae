#pragma once

#include <cstdint>

namespace smoothcal {

// Counter-based generator: every draw is a pure function of its key, so
// replays do not depend on evaluation order or move order.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t t,
                                     std::uint64_t stream = 0) {
  return mix64(mix64(mix64(seed) ^ t) ^ (stream * 0xd1b54a32d192ed03ULL));
}

// Uniform in [0, 1) with 53 random bits.
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t t,
                                 std::uint64_t stream = 0) {
  return static_cast<double>(counter_hash(seed, t, stream) >> 11) * 0x1.0p-53;
}

}  // namespace smoothcal
