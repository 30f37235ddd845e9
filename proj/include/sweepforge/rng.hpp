#pragma once

#include <cstdint>
#include <random>

namespace sweepforge {

/// Seed for run unit `unit_index`: master_seed + golden-ratio increment times
/// (unit_index + 1), passed through the SplitMix64 finalizer. All arithmetic
/// is mod 2^64.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t unit_index) noexcept {
  std::uint64_t z = master_seed + 0x9E3779B97F4A7C15ULL * (unit_index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Per-unit random source: std::mt19937_64 seeded with the unit seed. The
/// helpers below are defined bit-exactly (unlike std:: distributions, whose
/// output differs between standard libraries) so runs reproduce on any
/// platform.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n), n > 0, by rejection (no modulo bias).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = max() - max() % n;
    for (;;) {
      std::uint64_t x = engine_();
      if (x < limit) return x % n;
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sweepforge
