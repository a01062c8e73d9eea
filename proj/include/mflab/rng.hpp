#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mflab {

/// Stream domains keep draws for different purposes disjoint even when the
/// remaining key words coincide.
enum class StreamDomain : std::uint64_t {
  kInit = 1,
  kNoise = 2,
  kData = 3,
  kReference = 4,
  kProjection = 5,
  kMonteCarlo = 6,
  kTest = 7,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based random stream. The state after k draws is a pure function of
/// (seed, domain, a, b, k), so a stream keyed by e.g. (step, particle) yields
/// the same values no matter which thread or in which order it is consumed.
class Stream {
 public:
  Stream(std::uint64_t seed, StreamDomain domain, std::uint64_t a = 0,
         std::uint64_t b = 0) {
    std::uint64_t k = splitmix64(seed);
    k = splitmix64(k ^ static_cast<std::uint64_t>(domain));
    k = splitmix64(k ^ a);
    k = splitmix64(k ^ (b * 0xd1b54a32d192ed03ULL));
    state_ = k;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double phi = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

  double rademacher() { return (next_u64() >> 63) ? 1.0 : -1.0; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mflab
