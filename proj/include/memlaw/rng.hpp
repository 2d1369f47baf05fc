#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace memlaw {

// SplitMix64 finalizer. Used both as the generator step and for key derivation.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Counter-based deterministic RNG. The state is seed + n*golden, so any draw
// is a pure function of (seed, draw index); streams for different sample
// indices are independent and order of sample generation does not matter.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Derived stream, e.g. one per sample index or per field component.
  Rng split(std::uint64_t stream) const {
    return Rng(mix64(state_ + 0x9e3779b97f4a7c15ull * (stream + 1)) ^ 0x5851f42d4c957f2dull);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix64(state_);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in {lo, ..., hi} inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    // 128-bit multiply avoids modulo bias.
    const unsigned __int128 prod =
        static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(span);
    return lo + static_cast<std::int64_t>(prod >> 64);
  }

  // Standard normal via Box-Muller; caches the second deviate.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Random sign in {-1, +1}.
  int sign() { return (next_u64() & 1ull) ? 1 : -1; }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace memlaw
