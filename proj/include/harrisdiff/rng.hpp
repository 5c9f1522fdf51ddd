#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace harrisdiff {

// Counter-based splittable random stream. Every stream is identified by a
// 64-bit key; drawing advances a counter and the n-th output is a pure
// function of (key, n), so identical (seed, derivation path) pairs yield
// identical draws regardless of evaluation order or thread placement.
// Child streams are derived by hashing the parent key with a salt.
class RngStream {
 public:
  RngStream() : key_(0), ctr_(0) {}

  static RngStream root(std::uint64_t seed) { return RngStream(mix(seed ^ kRootTag)); }

  RngStream split(std::uint64_t salt) const {
    return RngStream(mix(key_ ^ mix(salt + kSplitTag)));
  }
  RngStream split(std::uint64_t a, std::uint64_t b) const { return split(a).split(b); }

  std::uint64_t next_u64() { return mix(key_ + (++ctr_) * kGolden); }

  // uniform on (0,1), never exactly 0 or 1
  double next_double() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // standard normal via Box-Muller; two uniforms per draw, no cached spare
  double next_normal() {
    const double u = next_double();
    const double v = next_double();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
  }

  std::uint64_t key() const { return key_; }

 private:
  explicit RngStream(std::uint64_t key) : key_(key), ctr_(0) {}

  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kRootTag = 0x853C49E6748FEA9Bull;
  static constexpr std::uint64_t kSplitTag = 0x632BE59BD9B4E019ull;

  // SplitMix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t ctr_;
};

// Fixed salts for the derivation tree; keeping them in one place makes the
// stream layout auditable.
namespace rng_salt {
inline constexpr std::uint64_t kReplicate = 1;
inline constexpr std::uint64_t kChainNoise = 2;
inline constexpr std::uint64_t kDataDraw = 3;
inline constexpr std::uint64_t kForwardNoise = 4;
inline constexpr std::uint64_t kReference = 5;
inline constexpr std::uint64_t kDirection = 6;
inline constexpr std::uint64_t kMetric = 7;
inline constexpr std::uint64_t kRestart = 8;
inline constexpr std::uint64_t kInit = 9;
inline constexpr std::uint64_t kSubsample = 10;
inline constexpr std::uint64_t kProbe = 11;
}  // namespace rng_salt

}  // namespace harrisdiff
