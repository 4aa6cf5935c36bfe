#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "calib/errors.hpp"
#include "calib/oracle.hpp"

using namespace calib;

namespace {

// Closed form for c(z) = z^gamma under the uniform density:
// integral of (a^(g+1)/(g+1) - a^2/2)^2 da over [0,1].
double power_model_truth(double gamma) {
  return 1.0 / ((2 * gamma + 3) * (gamma + 1) * (gamma + 1)) -
         1.0 / ((gamma + 4) * (gamma + 1)) + 1.0 / 20.0;
}

SyntheticCalibrationModel power_model(double gamma) {
  SyntheticCalibrationModel m;
  m.calibration = CalibrationFamily::power;
  m.gamma = gamma;
  return m;
}

// Independent coarse integrator: cumulative trapezoid for the inner integral
// followed by a trapezoid over alpha. Shares nothing with the library path.
double trapezoid_truth(const SyntheticCalibrationModel& m, int steps = 20000) {
  std::vector<double> inner(steps + 1);
  double h = 1.0 / steps;
  inner[0] = 0.0;
  auto f = [&](double z) { return (m.calibration_fn(z) - z) * m.density_pdf(z); };
  for (int k = 1; k <= steps; ++k) {
    double z0 = (k - 1) * h, z1 = k * h;
    inner[k] = inner[k - 1] + 0.5 * h * (f(z0) + f(z1));
  }
  double total = 0.0;
  for (int k = 0; k <= steps; ++k) {
    double alpha = k * h;
    double v = inner[k] * inner[k] * m.density_pdf(alpha);
    total += (k == 0 || k == steps) ? 0.5 * v : v;
  }
  return total * h;
}

}  // namespace

TEST_CASE("true_esd closed forms on the uniform density") {
  CHECK(true_esd(SyntheticCalibrationModel{}) == 0.0);  // identity calibration

  CHECK(true_esd(power_model(2.0)) == doctest::Approx(13.0 / 1260.0).epsilon(1e-9));
  for (double gamma : {0.5, 0.75, 1.5}) {
    CAPTURE(gamma);
    CHECK(true_esd(power_model(gamma)) ==
          doctest::Approx(power_model_truth(gamma)).epsilon(1e-8));
  }
}

TEST_CASE("true_esd agrees with an independent integrator on a beta model") {
  SyntheticCalibrationModel m = power_model(2.0);
  m.density = DensityFamily::beta;
  m.beta_a = 2.0;
  m.beta_b = 2.0;
  CHECK(true_esd(m) == doctest::Approx(trapezoid_truth(m)).epsilon(1e-5));

  SyntheticCalibrationModel affine;
  affine.calibration = CalibrationFamily::affine_clamped;
  affine.affine_a = 0.6;
  affine.affine_b = 0.1;
  CHECK(true_esd(affine) == doctest::Approx(trapezoid_truth(affine)).epsilon(1e-5));
}

TEST_CASE("true_esd is nonnegative, zero only at identity, continuous in gamma") {
  SyntheticCalibrationModel beta_identity;
  beta_identity.density = DensityFamily::beta;
  beta_identity.beta_a = 3.0;
  beta_identity.beta_b = 1.5;
  CHECK(true_esd(beta_identity) == 0.0);

  CHECK(true_esd(power_model(0.5)) > 0.0);
  CHECK(true_esd(power_model(1.0)) == 0.0);
  CHECK(true_esd(power_model(1.001)) < 1e-5);

  // Severity ordering on each side of gamma = 1.
  CHECK(true_esd(power_model(0.75)) < true_esd(power_model(0.5)));
  CHECK(true_esd(power_model(1.5)) < true_esd(power_model(2.0)));
  CHECK(true_esd(power_model(1.0)) < true_esd(power_model(0.75)));
  CHECK(true_esd(power_model(1.0)) < true_esd(power_model(1.5)));
}

TEST_CASE("sample_batch statistics and determinism") {
  SyntheticCalibrationModel identity;
  PredictionBatch big = sample_batch(identity, 100000, 7);
  CHECK(big.accuracy() == doctest::Approx(0.5).epsilon(0.02));
  CHECK(big.mean_confidence() == doctest::Approx(0.5).epsilon(0.02));
  CHECK(std::abs(big.accuracy() - big.mean_confidence()) <= 0.01);

  SyntheticCalibrationModel always;
  always.calibration = CalibrationFamily::affine_clamped;
  always.affine_a = 0.0;
  always.affine_b = 1.0;
  PredictionBatch sure = sample_batch(always, 500, 3);
  for (auto c : sure.correct) CHECK(c == 1);

  PredictionBatch a = sample_batch(identity, 64, 99);
  PredictionBatch b = sample_batch(identity, 64, 99);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.confidence[i] == b.confidence[i]);
    CHECK(a.correct[i] == b.correct[i]);
  }

  SyntheticCalibrationModel beta;
  beta.density = DensityFamily::beta;
  beta.beta_a = 0.5;  // unbounded pdf rejected
  CHECK_THROWS_AS(sample_batch(beta, 10, 1), InvalidInputError);
}

TEST_CASE("unbiasedness study at moderate replication count") {
  UnbiasednessStudy study = unbiasedness_study(power_model(2.0), 50, 2000, 515151);
  CHECK(study.unbiased.truth == doctest::Approx(13.0 / 1260.0).epsilon(1e-9));
  CHECK(std::abs(study.unbiased.z_score) <= 4.0);
  CHECK(study.naive.z_score > 4.0);
  CHECK(study.naive.mean > study.unbiased.mean);
  CHECK(study.pass);

  UnbiasednessStudy calibrated = unbiasedness_study(SyntheticCalibrationModel{}, 50, 2000, 99);
  CHECK(std::abs(calibrated.unbiased.z_score) <= 4.0);
}

TEST_CASE("unbiasedness study is reproducible bit for bit") {
  auto a = unbiasedness_study(power_model(2.0), 20, 200, 777);
  auto b = unbiasedness_study(power_model(2.0), 20, 200, 777);
  CHECK(a.unbiased.mean == b.unbiased.mean);
  CHECK(a.naive.sd == b.naive.sd);
}

TEST_CASE("consistency study variance ordering") {
  const int sizes[] = {10, 100, 1000};
  ConsistencyStudy study = consistency_study(power_model(2.0), sizes, 400, 31337);
  REQUIRE(study.per_n.size() == 3);
  CHECK(study.asserted);
  CHECK(study.variance_decreasing);
  CHECK(study.ratio_pass);
  CHECK(study.pass);

  const int single[] = {25};
  ConsistencyStudy lone = consistency_study(power_model(2.0), single, 100, 1);
  CHECK_FALSE(lone.asserted);
  CHECK(lone.pass);

  const int bad[] = {100, 10};
  CHECK_THROWS_AS(consistency_study(power_model(2.0), bad, 100, 1), InvalidInputError);
}

TEST_CASE("gradient expectation study agrees with finite differences") {
  GradientExpectationStudy study = gradient_expectation_study(power_model(2.0), 50, 400, 2468);
  CHECK(study.pass);
  CHECK(std::abs(study.diff) <= 4.0 * std::max(study.combined_se, 1e-12));

  // For the calibrated model t = 1 is a stationary point of the truth.
  GradientExpectationStudy flat =
      gradient_expectation_study(SyntheticCalibrationModel{}, 50, 400, 1357);
  CHECK(flat.pass);
  CHECK(std::abs(flat.analytic_mean) <= 5.0 * std::max(flat.analytic_se, 1e-12));
}

TEST_CASE("study report json carries the documented fields") {
  UnbiasednessStudy study = unbiasedness_study(power_model(2.0), 10, 100, 42);
  auto j = study.unbiased.to_json();
  for (const char* key : {"estimator", "N", "R", "mean", "sd", "se", "truth", "z_score", "pass"})
    CHECK(j.contains(key));
  CHECK(j["estimator"] == "unbiased");
  CHECK(j["N"] == 10);
}
