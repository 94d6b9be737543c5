#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace vhs2hd {

// SplitMix64 finalizer. Good avalanche; used to derive independent streams.
constexpr uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr uint64_t hash_string(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Small explicit-state generator. Output depends only on the seed and the
// number of draws, so results are identical across platforms and standard
// libraries (unlike std::normal_distribution).
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed = 0) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return n == 0 ? 0 : static_cast<uint64_t>(uniform() * n); }

  double normal() {
    // Box-Muller, one value per call.
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

// Counter-based stream position for reproducible sampling: content is a
// function of (seed, draw) only.
struct RngState {
  uint64_t seed = 0;
  uint64_t draw = 0;

  SplitMix64 stream(uint64_t salt) const { return SplitMix64(mix64(mix64(seed ^ salt) + draw)); }
  bool operator==(const RngState&) const = default;
};

}  // namespace vhs2hd
