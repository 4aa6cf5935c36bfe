#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "calib/data.hpp"
#include "calib/rng.hpp"

namespace calib {

enum class DensityFamily { uniform, beta };
enum class CalibrationFamily { identity, power, affine_clamped };

// A synthetic predictor: a confidence density p(z) on [0,1] and a
// calibration function c(z) = P(correct | Z = z). Identity c is a perfectly
// calibrated model; power and affine-clamped c give controllable
// miscalibration with cheap quadrature truth.
struct SyntheticCalibrationModel {
  DensityFamily density = DensityFamily::uniform;
  double beta_a = 1.0;  // beta density shapes; both must be >= 1
  double beta_b = 1.0;
  CalibrationFamily calibration = CalibrationFamily::identity;
  double gamma = 1.0;     // power: c(z) = z^gamma
  double affine_a = 1.0;  // affine_clamped: c(z) = clamp(a z + b, 0, 1)
  double affine_b = 0.0;

  void validate() const;
  double density_pdf(double z) const;
  double calibration_fn(double z) const;
  double sample_confidence(SplitMix64& rng) const;
  std::string describe() const;
  nlohmann::json to_json() const;
};

// z_i ~ p, correct_i ~ Bernoulli(c(z_i)), i.i.d.; deterministic per seed.
PredictionBatch sample_batch(const SyntheticCalibrationModel& model, int n,
                             std::uint64_t seed);

// Population value integral of d(alpha)^2 p(alpha) with
// d(alpha) = |integral_0^alpha (c(z) - z) p(z) dz|, by nested adaptive
// Simpson quadrature to absolute tolerance 1e-10.
double true_esd(const SyntheticCalibrationModel& model);

struct EstimatorStudyResult {
  std::string estimator;
  int sample_size = 0;
  int replications = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation across replications
  double se = 0.0;  // sd / sqrt(R)
  double truth = 0.0;
  double z_score = 0.0;  // (mean - truth) / se
  bool pass = false;

  nlohmann::json to_json() const;
};

struct UnbiasednessStudy {
  EstimatorStudyResult naive;
  EstimatorStudyResult unbiased;
  // unbiased within 4 SE of truth; naive above truth by more than 4 SE.
  bool pass = false;
};

// Resamples R batches of size N, evaluating both estimators against the
// quadrature truth. Replication r uses derive_seed(master_seed, r).
UnbiasednessStudy unbiasedness_study(const SyntheticCalibrationModel& model, int n,
                                     int replications, std::uint64_t master_seed);

struct ConsistencyStudy {
  std::vector<EstimatorStudyResult> per_n;  // unbiased estimator at each N
  bool asserted = false;                    // false for a single-N list
  bool variance_decreasing = false;
  bool ratio_pass = false;  // Var(N_max) < Var(N_min)/5 when N_max >= 10 N_min
  bool pass = false;
};

ConsistencyStudy consistency_study(const SyntheticCalibrationModel& model,
                                   std::span<const int> sample_sizes, int replications,
                                   std::uint64_t master_seed);

struct GradientExpectationStudy {
  int sample_size = 0;
  int replications = 0;
  double analytic_mean = 0.0;
  double analytic_se = 0.0;
  double fd_mean = 0.0;
  double fd_se = 0.0;
  double combined_se = 0.0;
  double diff = 0.0;
  bool pass = false;

  nlohmann::json to_json() const;
};

// Confidences are reparameterized through a temperature-like map
// z(t) = sigmoid(logit(z)/t), smooth and order-preserving, and the mean
// analytic d(ESD)/dt at t=1 is compared against a central finite difference
// of the mean estimate. Agreement within 4 combined standard errors.
GradientExpectationStudy gradient_expectation_study(const SyntheticCalibrationModel& model,
                                                    int n, int replications,
                                                    std::uint64_t master_seed);

}  // namespace calib
