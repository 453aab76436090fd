#pragma once

#include <cmath>
#include <cstdint>

namespace smearlab {

// Counter-based generator built on splitmix64. Each (seed, stream) pair
// yields an independent deterministic sequence, so per-example streams
// (stream = example index) make parallel noise injection order-independent.
class StreamRng {
 public:
  StreamRng(std::uint64_t seed, std::uint64_t stream)
      : state_(mix(mix(seed + 0x9e3779b97f4a7c15ull) ^ mix(stream + 0xbf58476d1ce4e5b9ull))) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // uniform in [0, 1) with 53 bits of precision
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n); n must be positive
  std::uint32_t uniform_int(std::uint32_t n) {
    // Lemire multiply-shift; bias is negligible for the n used here (< 2^32)
    return static_cast<std::uint32_t>((static_cast<unsigned __int128>(next_u64() >> 32) * n) >> 32);
  }

  // standard normal via Box-Muller; platform-stable given libm
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace smearlab
