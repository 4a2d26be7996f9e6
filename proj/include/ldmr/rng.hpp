#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace ldmr {

// splitmix64 finalizer
inline uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Counter-mode splitmix64: the value at position `counter` of the stream
// started at mix64(seed). Stateless, so per-pixel draws are identical under
// any parallel ordering.
inline uint64_t counter_bits(uint64_t seed, uint64_t counter) {
  return mix64(mix64(seed) + counter * 0x9E3779B97F4A7C15ull);
}

// uniform in (0,1)
inline double u01(uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// One standard normal per counter (Box-Muller, cosine branch, two draws).
inline double counter_normal(uint64_t seed, uint64_t counter) {
  double u1 = u01(counter_bits(seed, 2 * counter));
  double u2 = u01(counter_bits(seed, 2 * counter + 1));
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

inline uint64_t hash_str(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

// Seed lineage: child streams are derived from (parent, role, index) so every
// stage and realization has an independent, reproducible stream.
inline uint64_t derive_seed(uint64_t parent, std::string_view role,
                            uint64_t index = 0) {
  return mix64(parent ^ mix64(hash_str(role) + 0x632BE59BD9B4E019ull * index));
}

}  // namespace ldmr
