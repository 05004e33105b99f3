#pragma once

#include <cstdint>
#include <cmath>
#include <cstddef>

// Seeded, splittable randomness. The generator identity is part of the
// reproducibility contract and is recorded in run metadata:
//
//   stream state = xoshiro256++ seeded by four splitmix64 outputs from
//                  z0 = seed + (stream + 1) * 0x9E3779B97F4A7C15
//
// uniform(): 53-bit mantissa in [0, 1).
// uniform_index(n): unbiased via 128-bit multiply with rejection.
// normal(): Box-Muller pair, second value cached.

namespace polarsim {

inline std::uint64_t splitmix64(std::uint64_t& z) {
  z += 0x9E3779B97F4A7C15ULL;
  std::uint64_t x = z;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  static constexpr const char* kAlgorithm = "xoshiro256++(splitmix64 streams)";

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t z = seed + (stream + 1) * 0x9E3779B97F4A7C15ULL;
    for (auto& s : s_) s = splitmix64(z);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  std::size_t uniform_index(std::size_t n) {
    // Lemire's multiply-shift with rejection; exact for any n.
    std::uint64_t x = next();
    __uint128_t m = __uint128_t(x) * n;
    auto lo = std::uint64_t(m);
    if (lo < n) {
      const std::uint64_t threshold = (0 - std::uint64_t(n)) % n;
      while (lo < threshold) {
        x = next();
        m = __uint128_t(x) * n;
        lo = std::uint64_t(m);
      }
    }
    return std::size_t(m >> 64);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so log stays finite.
    const double u1 = double((next() >> 11) + 1) * 0x1.0p-53;
    const double u2 = double(next() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace polarsim
