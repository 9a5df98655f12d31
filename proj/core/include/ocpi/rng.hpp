#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ocpi {

using Rng = std::mt19937_64;

// Mixes a run seed, a named substream and up to two indices into an
// independent generator seed (splitmix64 finalizer over FNV-1a of the name).
inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view stream, std::uint64_t a = 0,
                                    std::uint64_t b = 0) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  std::uint64_t z = mix(seed ^ mix(h));
  z = mix(z ^ mix(a + 0x632be59bd9b4e019ull));
  z = mix(z ^ mix(b + 0x8cb92ba72f3d8dd7ull));
  return z;
}

inline Rng make_rng(std::uint64_t seed, std::string_view stream, std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(substream_seed(seed, stream, a, b));
}

// Uniform in [lo, hi) from the top 53 bits; platform independent.
inline double uniform(Rng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

}  // namespace ocpi
