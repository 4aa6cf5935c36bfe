#include "calib/postprocess.hpp"

#include <algorithm>
#include <cmath>

#include "calib/errors.hpp"
#include "calib/net.hpp"

namespace calib {

namespace {

double mean_nll(const Matrix& logits, std::span<const int> labels) {
  return nll_loss_and_grad(logits, labels).first;
}

bool single_class(std::span<const int> labels) {
  for (int y : labels)
    if (y != labels[0]) return false;
  return true;
}

}  // namespace

Matrix scale_logits(const TemperatureModel& model, const Matrix& logits) {
  Matrix scaled = logits;
  for (double& v : scaled.data) v /= model.temperature;
  return scaled;
}

Matrix scale_logits(const VectorScaleModel& model, const Matrix& logits) {
  if (model.scale.size() != logits.cols || model.bias.size() != logits.cols)
    throw InvalidInputError("vector scaling: class count mismatch");
  Matrix scaled = logits;
  for (std::size_t i = 0; i < scaled.rows; ++i)
    for (std::size_t c = 0; c < scaled.cols; ++c)
      scaled.at(i, c) = model.scale[c] * logits.at(i, c) + model.bias[c];
  return scaled;
}

std::vector<ProbVector> apply(const TemperatureModel& model, const Matrix& logits) {
  Matrix scaled = scale_logits(model, logits);
  std::vector<ProbVector> probs;
  probs.reserve(scaled.rows);
  for (std::size_t i = 0; i < scaled.rows; ++i) probs.push_back(softmax(scaled.row(i)));
  return probs;
}

std::vector<ProbVector> apply(const VectorScaleModel& model, const Matrix& logits) {
  Matrix scaled = scale_logits(model, logits);
  std::vector<ProbVector> probs;
  probs.reserve(scaled.rows);
  for (std::size_t i = 0; i < scaled.rows; ++i) probs.push_back(softmax(scaled.row(i)));
  return probs;
}

TemperatureFit fit_temperature(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows == 0) throw InvalidInputError("fit_temperature: empty validation set");
  TemperatureFit fit;
  fit.nll_before = mean_nll(logits, labels);
  if (single_class(labels)) {
    fit.degenerate = true;
    fit.nll_after = fit.nll_before;
    return fit;
  }

  auto nll_at = [&](double log_t) {
    TemperatureModel m{std::exp(log_t)};
    return mean_nll(scale_logits(m, logits), labels);
  };

  // Golden-section search on ln T to 1e-4.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(kTemperatureMin);
  double b = std::log(kTemperatureMax);
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = nll_at(c);
  double fd = nll_at(d);
  while (b - a > 1e-4) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = nll_at(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = nll_at(d);
    }
  }
  double log_t = 0.5 * (a + b);
  double best = nll_at(log_t);
  // Guard: never leave the validation NLL worse than the identity temperature.
  if (best > fit.nll_before) {
    log_t = 0.0;
    best = fit.nll_before;
  }
  fit.model.temperature = std::exp(log_t);
  fit.nll_after = best;
  return fit;
}

VectorScaleFit fit_vector_scaling(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows == 0) throw InvalidInputError("fit_vector_scaling: empty validation set");
  const std::size_t classes = logits.cols;
  VectorScaleFit fit;
  fit.model.scale.assign(classes, 1.0);
  fit.model.bias.assign(classes, 0.0);
  fit.nll_before = mean_nll(logits, labels);

  std::vector<double> trace{fit.nll_before};
  double current = fit.nll_before;
  int stalled = 0;
  const double lr = 0.01;
  const int max_iters = 2000;

  for (int iter = 0; iter < max_iters; ++iter) {
    Matrix scaled = scale_logits(fit.model, logits);
    auto [nll, dlogits] = nll_loss_and_grad(scaled, labels);
    std::vector<double> grad_w(classes, 0.0), grad_b(classes, 0.0);
    for (std::size_t i = 0; i < logits.rows; ++i)
      for (std::size_t c = 0; c < classes; ++c) {
        grad_w[c] += dlogits.at(i, c) * logits.at(i, c);
        grad_b[c] += dlogits.at(i, c);
      }
    double grad_norm = 0.0;
    for (std::size_t c = 0; c < classes; ++c)
      grad_norm += grad_w[c] * grad_w[c] + grad_b[c] * grad_b[c];
    grad_norm = std::sqrt(grad_norm);
    fit.iterations = iter;
    if (grad_norm < 1e-7) break;

    // Backtracking: halve the step until the NLL does not increase.
    double step = lr;
    VectorScaleModel candidate = fit.model;
    double candidate_nll = current;
    bool improved = false;
    for (int tries = 0; tries < 30; ++tries) {
      for (std::size_t c = 0; c < classes; ++c) {
        candidate.scale[c] = fit.model.scale[c] - step * grad_w[c];
        candidate.bias[c] = fit.model.bias[c] - step * grad_b[c];
      }
      candidate_nll = mean_nll(scale_logits(candidate, logits), labels);
      if (candidate_nll <= current) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) {
      trace.push_back(candidate_nll);
      if (++stalled >= 10)
        throw FitError("fit_vector_scaling: NLL failed to descend for 10 iterations",
                       std::move(trace));
      continue;
    }
    stalled = 0;
    fit.model = candidate;
    current = candidate_nll;
    trace.push_back(current);
  }
  fit.nll_after = current;
  return fit;
}

}  // namespace calib
