#pragma once

#include <span>
#include <vector>

#include "calib/data.hpp"
#include "calib/numerics.hpp"

namespace calib {

struct TemperatureModel {
  double temperature = 1.0;
};

struct VectorScaleModel {
  std::vector<double> scale;  // per-class multiplier
  std::vector<double> bias;   // per-class offset
};

struct TemperatureFit {
  TemperatureModel model;
  double nll_before = 0.0;
  double nll_after = 0.0;
  // Set when the validation set has a single class; the fit falls back to T=1.
  bool degenerate = false;
};

struct VectorScaleFit {
  VectorScaleModel model;
  double nll_before = 0.0;
  double nll_after = 0.0;
  int iterations = 0;
};

// Search bounds for the temperature (in T, the search runs over ln T).
constexpr double kTemperatureMin = 0.05;
constexpr double kTemperatureMax = 10.0;

// Golden-section search on ln T minimizing validation NLL of softmax(logits/T).
// Never returns a temperature whose NLL is worse than T = 1.
TemperatureFit fit_temperature(const Matrix& logits, std::span<const int> labels);

// Full-batch gradient descent on softmax(w * logits + b), init w=1 b=0,
// lr 0.01 with backtracking, up to 2000 iterations or gradient norm < 1e-7.
// Throws FitError (with the NLL trace) if the objective refuses to descend
// for 10 consecutive iterations.
VectorScaleFit fit_vector_scaling(const Matrix& logits, std::span<const int> labels);

Matrix scale_logits(const TemperatureModel& model, const Matrix& logits);
Matrix scale_logits(const VectorScaleModel& model, const Matrix& logits);

std::vector<ProbVector> apply(const TemperatureModel& model, const Matrix& logits);
std::vector<ProbVector> apply(const VectorScaleModel& model, const Matrix& logits);

}  // namespace calib
