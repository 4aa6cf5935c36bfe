#include "calib/rng.hpp"

#include <cmath>
#include <numbers>

#include "calib/errors.hpp"

namespace calib {

std::uint64_t SplitMix64::next_below(std::uint64_t bound) {
  if (bound == 0) throw InvalidInputError("next_below: bound must be positive");
  // Reject the tail of the 64-bit range that would wrap unevenly.
  std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    std::uint64_t x = next_u64();
    if (x >= threshold) return x % bound;
  }
}

double SplitMix64::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 1.0 - next_double();  // (0, 1]
  double u2 = next_double();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double SplitMix64::next_gamma(double shape) {
  if (!(shape > 0.0)) throw InvalidInputError("next_gamma: shape must be positive");
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a+1) * U^(1/a)
    double u = 1.0 - next_double();
    return next_gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  double d = shape - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = next_gaussian();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    double u = 1.0 - next_double();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

double SplitMix64::next_beta(double a, double b) {
  double x = next_gamma(a);
  double y = next_gamma(b);
  return x / (x + y);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + (stream + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, SplitMix64& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  return idx;
}

}  // namespace calib
