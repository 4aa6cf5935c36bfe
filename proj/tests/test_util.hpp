#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "calib/data.hpp"
#include "calib/rng.hpp"

namespace testutil {

// Central finite difference of f at x, coordinate by coordinate.
inline std::vector<double> finite_difference(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double h = 1e-6) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double keep = x[i];
    x[i] = keep + h;
    double up = f(x);
    x[i] = keep - h;
    double down = f(x);
    x[i] = keep;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

inline double rel_error(double a, double b, double atol = 1e-9) {
  double scale = std::max(std::abs(a), std::abs(b));
  if (scale < atol) return 0.0;
  return std::abs(a - b) / scale;
}

// Random batch whose confidences keep a minimum pairwise gap, so indicator
// and bin-membership masks are locally constant under small perturbations.
inline calib::PredictionBatch random_gapped_batch(std::size_t n, calib::SplitMix64& rng,
                                                  double min_gap = 2e-3) {
  calib::PredictionBatch batch;
  for (;;) {
    batch.confidence.clear();
    for (std::size_t i = 0; i < n; ++i)
      batch.confidence.push_back(0.05 + 0.9 * rng.next_double());
    std::vector<double> sorted = batch.confidence;
    std::sort(sorted.begin(), sorted.end());
    bool ok = true;
    for (std::size_t i = 1; i < n; ++i)
      if (sorted[i] - sorted[i - 1] < min_gap) ok = false;
    if (ok) break;
  }
  batch.correct.clear();
  for (std::size_t i = 0; i < n; ++i)
    batch.correct.push_back(rng.next_double() < batch.confidence[i] ? 1 : 0);
  return batch;
}

inline calib::PredictionBatch random_batch(std::size_t n, calib::SplitMix64& rng) {
  calib::PredictionBatch batch;
  for (std::size_t i = 0; i < n; ++i) {
    batch.confidence.push_back(rng.next_double());
    batch.correct.push_back(rng.next_double() < 0.5 ? 1 : 0);
  }
  return batch;
}

// Reference ESD estimators, written as literal double sums with the variance
// computed from its definition. Deliberately shares no code with the library.
struct EsdReference {
  std::vector<double> gbar;
  std::vector<double> s2;
  double naive = 0.0;
  double unbiased = 0.0;
};

inline EsdReference esd_reference(const calib::PredictionBatch& batch) {
  const std::size_t n = batch.size();
  EsdReference ref;
  ref.gbar.resize(n);
  ref.s2.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (batch.confidence[j] <= batch.confidence[i])
        sum += (batch.correct[j] ? 1.0 : 0.0) - batch.confidence[j];
    }
    ref.gbar[i] = sum / static_cast<double>(n - 1);
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double gij = 0.0;
      if (batch.confidence[j] <= batch.confidence[i])
        gij = (batch.correct[j] ? 1.0 : 0.0) - batch.confidence[j];
      sq += (gij - ref.gbar[i]) * (gij - ref.gbar[i]);
    }
    ref.s2[i] = n > 2 ? sq / static_cast<double>(n - 2) : 0.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    ref.naive += ref.gbar[i] * ref.gbar[i] / static_cast<double>(n);
    ref.unbiased +=
        (ref.gbar[i] * ref.gbar[i] - ref.s2[i] / static_cast<double>(n - 1)) /
        static_cast<double>(n);
  }
  return ref;
}

}  // namespace testutil
