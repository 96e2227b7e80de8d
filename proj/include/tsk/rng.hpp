// Deterministic, splittable random streams.
//
// Every randomized transform in the library draws from an RngStream that is
// fully determined by a (seed, stream) pair of 64-bit integers. Distinct
// components derive child streams with distinct tags, so a single master seed
// reproduces an entire pipeline bit-for-bit, and no component's draws depend
// on how much randomness another component consumed.
//
// The engine is std::mt19937_64, whose output sequence is pinned by the C++
// standard, seeded through a splitmix64-style finalizer. Gaussian variates
// use an explicit Box-Muller transform rather than std::normal_distribution,
// whose algorithm is implementation-defined; this keeps streams bit-identical
// across standard libraries.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tsk {

// splitmix64 finalizer: disperses a 64-bit value; consecutive inputs map to
// statistically independent-looking outputs.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed),
        stream_(stream),
        eng_(mix64(mix64(seed) ^ mix64(~stream))),
        spare_(0.0),
        has_spare_(false) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  // Derive an independent stream under the same master seed. Children of the
  // same parent with distinct tags (and children of distinct parents) land on
  // distinct streams for all practical purposes.
  RngStream child(std::uint64_t tag) const {
    return RngStream(seed_, mix64(mix64(stream_) + tag));
  }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform on [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; generates pairs and caches the spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double t = 6.283185307179586476925286766559 * uniform();
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  // Rademacher sign, +1 or -1.
  double sign() { return (next_u64() >> 63) ? 1.0 : -1.0; }

  // Uniform index in [0, n). Fixed-point multiply keeps the mapping exact and
  // platform-independent; the bias for n << 2^64 is negligible.
  std::size_t index(std::size_t n) {
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
    return static_cast<std::size_t>(wide >> 64);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 eng_;
  double spare_;
  bool has_spare_;
};

}  // namespace tsk
