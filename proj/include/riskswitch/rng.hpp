#pragma once

#include <cmath>
#include <cstdint>

namespace riskswitch {

/// SplitMix64 finalizer. Bijective on 64-bit words, passes the usual
/// avalanche batteries; used both as a mixer and as the stream generator.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based stream: the state is (key, counter) and output n is a pure
/// function of both, so path p of run with seed s always sees the same draws
/// no matter how paths are scheduled across threads. Gaussians come from
/// Box-Muller rather than std::normal_distribution, whose algorithm is
/// unspecified; everything here is bit-reproducible across toolchains.
class PathRng {
 public:
  /// `mirror` replays the same stream reflected through u -> 1-u, the
  /// antithetic companion of the plain stream.
  PathRng(std::uint64_t seed, std::uint64_t stream, bool mirror = false)
      : key_(mix64(mix64(seed) ^ mix64(~stream * 0xda942042e4dd58b5ULL))),
        ctr_(0),
        mirror_(mirror) {}

  std::uint64_t next_u64() { return mix64(key_ + ++ctr_ * 0x9e3779b97f4a7c15ULL); }

  /// Uniform on [0,1) with 53 random bits.
  double uniform() {
    double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    if (mirror_) {
      u = 1.0 - u;
      if (u >= 1.0) u = 1.0 - 0x1.0p-53;
    }
    return u;
  }

  /// Uniform on (0,1); safe under log().
  double uniform_open() {
    double u = uniform();
    return u > 0.0 ? u : 0x1.0p-53;
  }

  /// Exponential with the given rate (mean 1/rate).
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  /// Standard normal via Box-Muller; the second value of each pair is cached.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform_open();
    double u2 = uniform();
    double rad = std::sqrt(-2.0 * std::log(u1));
    double ang = 6.283185307179586476925286766559 * u2;
    spare_ = rad * std::sin(ang);
    have_spare_ = true;
    return rad * std::cos(ang);
  }

  /// Index into [0,n) without modulo bias worth caring about at n << 2^64.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_;
  bool mirror_ = false;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace riskswitch
