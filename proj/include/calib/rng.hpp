#pragma once

#include <cstdint>
#include <vector>

namespace calib {

// SplitMix64 (Steele/Lea/Flood 2014). Chosen over std::mt19937 because the
// entire state is one word, the update is branch-free, and the output
// sequence is identical on every platform for a given seed. Constants:
//   increment  0x9E3779B97F4A7C15 (2^64 / golden ratio)
//   mixers     0xBF58476D1CE4E5B9, 0x94D049BB133111EB
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 bits of mantissa.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, bound) by rejection, so no modulo bias.
  std::uint64_t next_below(std::uint64_t bound);

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double next_gaussian();

  // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled by boosting.
  double next_gamma(double shape);

  // Beta(a, b) as Ga/(Ga+Gb).
  double next_beta(double a, double b);

  // In-place Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Deterministic per-stream seed derivation: one SplitMix64 output step applied
// to (master advanced by stream+1 increments). Streams are decorrelated and
// the mapping is stable across platforms.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

// [0, n) as a shuffled index vector.
std::vector<std::size_t> shuffled_indices(std::size_t n, SplitMix64& rng);

}  // namespace calib
