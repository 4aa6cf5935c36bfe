#include "calib/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "calib/errors.hpp"
#include "calib/metrics.hpp"
#include "calib/numerics.hpp"

namespace calib {

using nlohmann::json;

void SyntheticCalibrationModel::validate() const {
  if (density == DensityFamily::beta && (beta_a < 1.0 || beta_b < 1.0))
    throw InvalidInputError("synthetic model: beta shapes must be >= 1 for bounded pdf");
  if (calibration == CalibrationFamily::power && !(gamma > 0.0))
    throw InvalidInputError("synthetic model: power gamma must be positive");
}

double SyntheticCalibrationModel::density_pdf(double z) const {
  switch (density) {
    case DensityFamily::uniform:
      return 1.0;
    case DensityFamily::beta: {
      double log_beta = std::lgamma(beta_a) + std::lgamma(beta_b) - std::lgamma(beta_a + beta_b);
      if (z <= 0.0 || z >= 1.0) {
        // Shapes >= 1 keep the endpoint values finite.
        if (z == 0.0) return beta_a == 1.0 ? std::exp(-log_beta) : 0.0;
        if (z == 1.0) return beta_b == 1.0 ? std::exp(-log_beta) : 0.0;
        return 0.0;
      }
      return std::exp((beta_a - 1.0) * std::log(z) + (beta_b - 1.0) * std::log(1.0 - z) -
                      log_beta);
    }
  }
  return 0.0;
}

double SyntheticCalibrationModel::calibration_fn(double z) const {
  switch (calibration) {
    case CalibrationFamily::identity:
      return z;
    case CalibrationFamily::power:
      return std::pow(z, gamma);
    case CalibrationFamily::affine_clamped:
      return std::clamp(affine_a * z + affine_b, 0.0, 1.0);
  }
  return z;
}

double SyntheticCalibrationModel::sample_confidence(SplitMix64& rng) const {
  switch (density) {
    case DensityFamily::uniform:
      return rng.next_double();
    case DensityFamily::beta:
      return rng.next_beta(beta_a, beta_b);
  }
  return rng.next_double();
}

std::string SyntheticCalibrationModel::describe() const {
  std::string p = density == DensityFamily::uniform
                      ? "uniform"
                      : "beta(" + format_round_trip(beta_a) + "," + format_round_trip(beta_b) + ")";
  std::string c;
  switch (calibration) {
    case CalibrationFamily::identity: c = "identity"; break;
    case CalibrationFamily::power: c = "power(" + format_round_trip(gamma) + ")"; break;
    case CalibrationFamily::affine_clamped:
      c = "affine(" + format_round_trip(affine_a) + "," + format_round_trip(affine_b) + ")";
      break;
  }
  return "p=" + p + ", c=" + c;
}

json SyntheticCalibrationModel::to_json() const {
  json j{{"density", density == DensityFamily::uniform ? "uniform" : "beta"},
         {"calibration", calibration == CalibrationFamily::identity
                             ? "identity"
                             : (calibration == CalibrationFamily::power ? "power" : "affine")}};
  if (density == DensityFamily::beta) {
    j["beta_a"] = beta_a;
    j["beta_b"] = beta_b;
  }
  if (calibration == CalibrationFamily::power) j["gamma"] = gamma;
  if (calibration == CalibrationFamily::affine_clamped) {
    j["affine_a"] = affine_a;
    j["affine_b"] = affine_b;
  }
  return j;
}

PredictionBatch sample_batch(const SyntheticCalibrationModel& model, int n,
                             std::uint64_t seed) {
  model.validate();
  if (n < 1) throw InvalidInputError("sample_batch: n must be >= 1");
  SplitMix64 rng(seed);
  PredictionBatch batch;
  batch.confidence.reserve(static_cast<std::size_t>(n));
  batch.correct.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double z = model.sample_confidence(rng);
    double c = model.calibration_fn(z);
    batch.confidence.push_back(z);
    batch.correct.push_back(rng.next_double() < c ? 1 : 0);
  }
  return batch;
}

double true_esd(const SyntheticCalibrationModel& model) {
  model.validate();
  // Identity calibration: the inner integrand is identically zero.
  if (model.calibration == CalibrationFamily::identity) return 0.0;
  auto inner = [&](double z) { return (model.calibration_fn(z) - z) * model.density_pdf(z); };
  auto gap = [&](double alpha) {
    if (alpha <= 0.0) return 0.0;
    return std::abs(adaptive_simpson(inner, 0.0, alpha, 1e-12));
  };
  auto outer = [&](double alpha) {
    double d = gap(alpha);
    return d * d * model.density_pdf(alpha);
  };
  return adaptive_simpson(outer, 0.0, 1.0, 1e-10);
}

namespace {

struct MomentSummary {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
};

MomentSummary summarize(const std::vector<double>& xs) {
  const double r = static_cast<double>(xs.size());
  MomentSummary s;
  s.mean = pairwise_sum(xs) / r;
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double d = xs[i] - s.mean;
    sq[i] = d * d;
  }
  s.sd = xs.size() > 1 ? std::sqrt(pairwise_sum(sq) / (r - 1.0)) : 0.0;
  s.se = s.sd / std::sqrt(r);
  return s;
}

EstimatorStudyResult make_result(const std::string& name, int n, int replications,
                                 const MomentSummary& s, double truth) {
  EstimatorStudyResult res;
  res.estimator = name;
  res.sample_size = n;
  res.replications = replications;
  res.mean = s.mean;
  res.sd = s.sd;
  res.se = s.se;
  res.truth = truth;
  res.z_score = s.se > 0.0 ? (s.mean - truth) / s.se : 0.0;
  return res;
}

}  // namespace

json EstimatorStudyResult::to_json() const {
  return json{{"estimator", estimator}, {"N", sample_size},   {"R", replications},
              {"mean", mean},           {"sd", sd},           {"se", se},
              {"truth", truth},         {"z_score", z_score}, {"pass", pass}};
}

UnbiasednessStudy unbiasedness_study(const SyntheticCalibrationModel& model, int n,
                                     int replications, std::uint64_t master_seed) {
  if (n < 3) throw InvalidInputError("unbiasedness_study: N must be >= 3");
  if (replications < 2) throw InvalidInputError("unbiasedness_study: R must be >= 2");
  const double truth = true_esd(model);
  std::vector<double> naive_vals(static_cast<std::size_t>(replications));
  std::vector<double> unbiased_vals(static_cast<std::size_t>(replications));
  for (int r = 0; r < replications; ++r) {
    PredictionBatch batch =
        sample_batch(model, n, derive_seed(master_seed, static_cast<std::uint64_t>(r)));
    naive_vals[static_cast<std::size_t>(r)] = esd_naive(batch);
    unbiased_vals[static_cast<std::size_t>(r)] = esd_unbiased(batch).value;
  }
  UnbiasednessStudy study;
  study.naive = make_result("naive", n, replications, summarize(naive_vals), truth);
  study.unbiased = make_result("unbiased", n, replications, summarize(unbiased_vals), truth);
  study.unbiased.pass = std::abs(study.unbiased.z_score) <= 4.0;
  study.naive.pass = study.naive.z_score > 4.0;  // upper-bound gap is the claim
  study.pass = study.unbiased.pass && study.naive.pass;
  return study;
}

ConsistencyStudy consistency_study(const SyntheticCalibrationModel& model,
                                   std::span<const int> sample_sizes, int replications,
                                   std::uint64_t master_seed) {
  if (sample_sizes.empty()) throw InvalidInputError("consistency_study: empty N list");
  for (std::size_t i = 0; i < sample_sizes.size(); ++i) {
    if (sample_sizes[i] < 3) throw InvalidInputError("consistency_study: N must be >= 3");
    if (i > 0 && sample_sizes[i] <= sample_sizes[i - 1])
      throw InvalidInputError("consistency_study: N list must be increasing");
  }
  const double truth = true_esd(model);
  ConsistencyStudy study;
  for (std::size_t k = 0; k < sample_sizes.size(); ++k) {
    std::vector<double> vals(static_cast<std::size_t>(replications));
    // Each N gets its own seed stream so adding sizes never shifts others.
    std::uint64_t stream = derive_seed(master_seed, 1000 + k);
    for (int r = 0; r < replications; ++r) {
      PredictionBatch batch = sample_batch(model, sample_sizes[k],
                                           derive_seed(stream, static_cast<std::uint64_t>(r)));
      vals[static_cast<std::size_t>(r)] = esd_unbiased(batch).value;
    }
    auto res = make_result("unbiased", sample_sizes[k], replications, summarize(vals), truth);
    res.pass = true;
    study.per_n.push_back(res);
  }
  if (study.per_n.size() < 2) {
    study.asserted = false;
    study.pass = true;
    return study;
  }
  study.asserted = true;
  study.variance_decreasing = true;
  for (std::size_t k = 1; k < study.per_n.size(); ++k)
    if (!(study.per_n[k].sd * study.per_n[k].sd < study.per_n[k - 1].sd * study.per_n[k - 1].sd))
      study.variance_decreasing = false;
  const auto& first = study.per_n.front();
  const auto& last = study.per_n.back();
  if (last.sample_size >= 10 * first.sample_size)
    study.ratio_pass = last.sd * last.sd < first.sd * first.sd / 5.0;
  else
    study.ratio_pass = true;
  study.pass = study.variance_decreasing && study.ratio_pass;
  return study;
}

json GradientExpectationStudy::to_json() const {
  return json{{"N", sample_size},
              {"R", replications},
              {"analytic_mean", analytic_mean},
              {"analytic_se", analytic_se},
              {"fd_mean", fd_mean},
              {"fd_se", fd_se},
              {"combined_se", combined_se},
              {"diff", diff},
              {"pass", pass}};
}

GradientExpectationStudy gradient_expectation_study(const SyntheticCalibrationModel& model,
                                                    int n, int replications,
                                                    std::uint64_t master_seed) {
  if (n < 3) throw InvalidInputError("gradient_expectation_study: N must be >= 3");
  if (replications < 2) throw InvalidInputError("gradient_expectation_study: R must be >= 2");
  const double h = 1e-4;

  auto transformed = [](const PredictionBatch& base, const std::vector<double>& logits,
                        double t) {
    PredictionBatch out = base;
    for (std::size_t i = 0; i < out.size(); ++i) out.confidence[i] = sigmoid(logits[i] / t);
    return out;
  };

  std::vector<double> analytic(static_cast<std::size_t>(replications));
  std::vector<double> fd(static_cast<std::size_t>(replications));
  for (int r = 0; r < replications; ++r) {
    PredictionBatch batch =
        sample_batch(model, n, derive_seed(master_seed, static_cast<std::uint64_t>(r)));
    std::vector<double> logits(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      double z = std::clamp(batch.confidence[i], 1e-12, 1.0 - 1e-12);
      batch.confidence[i] = z;
      logits[i] = logit(z);
    }
    // At t=1 the map is the identity on the confidences.
    MetricValueWithGrad grad = esd_unbiased(batch);
    std::vector<double> chain(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      double z = batch.confidence[i];
      chain[i] = grad.grad_confidence[i] * (-z * (1.0 - z) * logits[i]);
    }
    analytic[static_cast<std::size_t>(r)] = pairwise_sum(chain);
    double up = esd_unbiased(transformed(batch, logits, 1.0 + h)).value;
    double down = esd_unbiased(transformed(batch, logits, 1.0 - h)).value;
    fd[static_cast<std::size_t>(r)] = (up - down) / (2.0 * h);
  }

  MomentSummary sa = summarize(analytic);
  MomentSummary sf = summarize(fd);
  GradientExpectationStudy study;
  study.sample_size = n;
  study.replications = replications;
  study.analytic_mean = sa.mean;
  study.analytic_se = sa.se;
  study.fd_mean = sf.mean;
  study.fd_se = sf.se;
  study.combined_se = std::sqrt(sa.se * sa.se + sf.se * sf.se);
  study.diff = sa.mean - sf.mean;
  study.pass = std::abs(study.diff) <= 4.0 * std::max(study.combined_se, 1e-12);
  return study;
}

}  // namespace calib
