#include "calib/numerics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "calib/errors.hpp"

namespace calib {

namespace {

constexpr std::size_t kPairwiseBlock = 64;

double simpson_estimate(const std::function<double(double)>& f, double a, double fa,
                        double b, double fb, double& fm) {
  double m = 0.5 * (a + b);
  fm = f(m);
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double simpson_recurse(const std::function<double(double)>& f, double a, double fa,
                       double b, double fb, double m, double fm, double whole,
                       double tol, int depth) {
  double lm, rm;
  double left = simpson_estimate(f, a, fa, m, fm, lm);
  double right = simpson_estimate(f, m, fm, b, fb, rm);
  double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  double lmid = 0.5 * (a + m);
  double rmid = 0.5 * (m + b);
  // Interval has collapsed to adjacent doubles; no further refinement exists.
  if (lmid <= a || lmid >= m || rmid <= m || rmid >= b) return left + right + delta / 15.0;
  if (depth <= 0) throw NumericError("adaptive_simpson: tolerance not reached");
  // Keep the per-level tolerance above roundoff so integrands with endpoint
  // cusps terminate instead of chasing noise.
  double next_tol = std::max(0.5 * tol,
                             std::numeric_limits<double>::epsilon() * std::abs(whole));
  return simpson_recurse(f, a, fa, m, fm, lmid, lm, left, next_tol, depth - 1) +
         simpson_recurse(f, m, fm, b, fb, rmid, rm, right, next_tol, depth - 1);
}

}  // namespace

double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= kPairwiseBlock) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth) {
  if (a == b) return 0.0;
  double fa = f(a);
  double fb = f(b);
  double fm;
  double whole = simpson_estimate(f, a, fa, b, fb, fm);
  return simpson_recurse(f, a, fa, b, fb, 0.5 * (a + b), fm, whole, tol, max_depth);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string fnv1a64_hex(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

std::string format_round_trip(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace calib
