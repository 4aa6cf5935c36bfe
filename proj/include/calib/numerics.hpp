#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace calib {

// Tree-structured summation. Order of additions depends only on the length,
// never on thread count or chunking, so results are reproducible and the
// rounding error grows as O(log n) instead of O(n).
double pairwise_sum(std::span<const double> xs);

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Dense row-major matrix. Deliberately minimal: the training path needs
// only multiply-accumulate loops with a fixed iteration order.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
};

// Adaptive Simpson quadrature on [a, b] to absolute tolerance `tol`.
// Throws NumericError if the recursion cannot reach the tolerance. The depth
// allows for endpoint cusps (z^0.5-style integrands need ~70 levels).
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth = 120);

// FNV-1a 64-bit, used to fingerprint configuration snapshots.
std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);

// value -> decimal string with enough digits to round-trip exactly.
std::string format_round_trip(double value);

}  // namespace calib
