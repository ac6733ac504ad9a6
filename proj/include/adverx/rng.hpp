#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace adverx {

// Stream tags for deriving independent RNG sequences from one run seed.
// Values are part of the reproducibility contract; never renumber.
enum class RngStream : uint64_t {
  InitEncoder = 1,
  InitDecoder = 2,
  InitDiscriminator = 3,
  ScanPick = 4,
  PatchAnchors = 5,
  ReparamEps = 6,
  PriorSample = 7,
  Shift = 8,
  Split = 9,
  BalancedEval = 10,
  ScoreCycle = 11,
  Synth = 12,
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Self-contained generator (xoshiro256++) with explicit distribution
// transforms, so sequences are identical across platforms and stdlibs.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& si : s_) {
      x = splitmix64(x);
      si = x;
    }
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0,1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), unbiased (Lemire with rejection).
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) return 0;
    uint64_t x = next_u64();
    __uint128_t m = (__uint128_t)x * n;
    uint64_t lo = (uint64_t)m;
    if (lo < n) {
      uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        x = next_u64();
        m = (__uint128_t)x * n;
        lo = (uint64_t)m;
      }
    }
    return (uint64_t)(m >> 64);
  }

  // Standard normal via Box-Muller. Two uniforms per draw, no caching, so
  // the consumed stream does not depend on call history.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

// Derives a child seed from (seed, stream, index). Used to give every
// purpose (init, batch picks, patch anchors, eps draws, ...) its own
// sequence so that skipping one consumer never perturbs the others.
inline uint64_t derive_seed(uint64_t seed, RngStream stream, uint64_t index = 0) {
  uint64_t h = splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * (uint64_t(stream) + 1)));
  return splitmix64(h + index);
}

inline uint64_t hash_string64(const std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace adverx
