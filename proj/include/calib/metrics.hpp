#pragma once

#include <span>
#include <string>
#include <vector>

#include "calib/data.hpp"

namespace calib {

struct ECEConfig {
  int num_bins = 20;
};

struct MMCEConfig {
  double kernel_width = 0.4;  // Laplacian kernel width
};

struct SBECEConfig {
  int num_bins = 15;
  double temperature = 0.01;  // softening of the bin memberships
};

// A metric value plus its gradient with respect to the per-sample
// confidences. Comparison results (indicators, bin memberships, argmax) are
// treated as constants during differentiation; `grad_is_exact_away_from_ties`
// is false whenever the batch sits on one of those non-differentiable points
// (tied confidences, a sample exactly on a bin edge, an absolute-value kink).
struct MetricValueWithGrad {
  double value = 0.0;
  std::vector<double> grad_confidence;
  bool grad_is_exact_away_from_ties = true;
};

// Binned expected calibration error: bins (j/B, (j+1)/B] with z = 0 assigned
// to the first bin; sum over bins of (n_j/N) * |acc_j - conf_j|.
double ece(const PredictionBatch& batch, const ECEConfig& cfg);

// Same value as ece(); the gradient holds bin membership fixed and
// differentiates only the mean confidence inside each bin, so per sample the
// gradient is sign(conf_bin - acc_bin) / N.
MetricValueWithGrad ece_soft_loss(const PredictionBatch& batch, const ECEConfig& cfg);

// |mean of I(z_i <= alpha) * (correct_i - z_i)|: the absolute gap between
// cumulative accuracy and cumulative confidence at threshold alpha.
double d_alpha(const PredictionBatch& batch, double alpha);

struct CurvePoint {
  double alpha = 0.0;
  double cum_acc = 0.0;
  double cum_conf = 0.0;
};

// Cumulative accuracy and confidence on a grid of thresholds; both columns
// are nondecreasing and |cum_acc - cum_conf| equals d_alpha pointwise.
std::vector<CurvePoint> cumulative_curves(const PredictionBatch& batch,
                                          std::span<const double> grid);

// Plug-in squared-mean estimator: (1/N) sum_i gbar_i^2 with
// gbar_i = (1/(N-1)) sum_{j != i} I(z_j <= z_i) (correct_j - z_j).
// Biased upward; requires N >= 2.
double esd_naive(const PredictionBatch& batch);

// Bias-corrected estimator: (1/N) sum_i [gbar_i^2 - S2_i/(N-1)] where S2_i is
// the sample variance of the g_ij over j != i. May legitimately be negative.
// Requires N >= 3. Gradient flows through the (correct_j - z_j) residuals
// only; the comparison masks are constants.
MetricValueWithGrad esd_unbiased(const PredictionBatch& batch);

// Kernel calibration error with Laplacian kernel k(z,z') = exp(-|z-z'|/phi):
// sqrt of (1/N^2) sum_{ij} (correct_i - z_i)(correct_j - z_j) k(z_i, z_j).
MetricValueWithGrad mmce(const PredictionBatch& batch, const MMCEConfig& cfg);

// Soft-binned ECE: Gaussian-kernel softmax memberships over M equally spaced
// centers, fully differentiable in the confidences.
MetricValueWithGrad sb_ece(const PredictionBatch& batch, const SBECEConfig& cfg);

// --- auxiliary loss selection -------------------------------------------

enum class ObjectiveKind { none, esd, mmce, sb_ece, ece_soft };

std::string to_string(ObjectiveKind kind);
ObjectiveKind objective_kind_from_string(const std::string& name);

// Tagged choice of auxiliary calibration loss plus its weight lambda.
struct CalibrationObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::none;
  double lambda = 0.0;
  MMCEConfig mmce;
  SBECEConfig sb_ece;
  ECEConfig ece;

  bool differentiable() const { return kind != ObjectiveKind::none; }
  // Minimum batch size the chosen loss accepts.
  std::size_t min_batch() const { return kind == ObjectiveKind::esd ? 3 : 1; }
  void validate() const;
  // Value and confidence-gradient of the selected loss (lambda not applied).
  MetricValueWithGrad evaluate(const PredictionBatch& batch) const;
  std::string describe() const;
};

}  // namespace calib
