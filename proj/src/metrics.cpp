#include "calib/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "calib/errors.hpp"
#include "calib/numerics.hpp"

namespace calib {

namespace {

// Bin index for the partition (j/B, (j+1)/B] with z = 0 assigned to bin 0.
// The candidate from ceil(z*B)-1 is corrected against the representable bin
// edges so the closed-right rule holds exactly.
int bin_index(double z, int bins) {
  int j = static_cast<int>(std::ceil(z * bins)) - 1;
  j = std::clamp(j, 0, bins - 1);
  while (j > 0 && z <= static_cast<double>(j) / bins) --j;
  while (j < bins - 1 && z > static_cast<double>(j + 1) / bins) ++j;
  return j;
}

bool on_bin_edge(double z, int bins) {
  double scaled = z * bins;
  double nearest = std::round(scaled);
  return z == nearest / static_cast<double>(bins);
}

bool has_tied_confidences(const PredictionBatch& batch) {
  std::vector<double> sorted = batch.confidence;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] == sorted[i - 1]) return true;
  return false;
}

struct BinStats {
  std::vector<double> conf;
  std::vector<double> hits;
};

std::vector<BinStats> fill_bins(const PredictionBatch& batch, int bins) {
  std::vector<BinStats> stats(static_cast<std::size_t>(bins));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto& b = stats[static_cast<std::size_t>(bin_index(batch.confidence[i], bins))];
    b.conf.push_back(batch.confidence[i]);
    b.hits.push_back(batch.correct[i] ? 1.0 : 0.0);
  }
  return stats;
}

}  // namespace

double ece(const PredictionBatch& batch, const ECEConfig& cfg) {
  batch.validate();
  if (cfg.num_bins < 1) throw InvalidInputError("ece: num_bins must be >= 1");
  const double n = static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& b : fill_bins(batch, cfg.num_bins)) {
    if (b.conf.empty()) continue;
    const double m = static_cast<double>(b.conf.size());
    double acc = pairwise_sum(b.hits) / m;
    double conf = pairwise_sum(b.conf) / m;
    total += (m / n) * std::abs(acc - conf);
  }
  return total;
}

MetricValueWithGrad ece_soft_loss(const PredictionBatch& batch, const ECEConfig& cfg) {
  batch.validate();
  if (cfg.num_bins < 1) throw InvalidInputError("ece_soft_loss: num_bins must be >= 1");
  const std::size_t n = batch.size();
  MetricValueWithGrad out;
  out.grad_confidence.assign(n, 0.0);
  out.value = 0.0;

  // Per-bin sign of (conf - acc); membership is a constant under the
  // stop-gradient convention, so only the -z_i terms differentiate.
  std::vector<double> sign_by_bin(static_cast<std::size_t>(cfg.num_bins), 0.0);
  auto stats = fill_bins(batch, cfg.num_bins);
  for (int j = 0; j < cfg.num_bins; ++j) {
    const auto& b = stats[static_cast<std::size_t>(j)];
    if (b.conf.empty()) continue;
    const double m = static_cast<double>(b.conf.size());
    double acc = pairwise_sum(b.hits) / m;
    double conf = pairwise_sum(b.conf) / m;
    out.value += (m / static_cast<double>(n)) * std::abs(acc - conf);
    sign_by_bin[static_cast<std::size_t>(j)] = conf >= acc ? 1.0 : -1.0;
    if (conf == acc) out.grad_is_exact_away_from_ties = false;
  }
  for (std::size_t i = 0; i < n; ++i) {
    int j = bin_index(batch.confidence[i], cfg.num_bins);
    out.grad_confidence[i] = sign_by_bin[static_cast<std::size_t>(j)] / static_cast<double>(n);
    if (on_bin_edge(batch.confidence[i], cfg.num_bins))
      out.grad_is_exact_away_from_ties = false;
  }
  return out;
}

double d_alpha(const PredictionBatch& batch, double alpha) {
  batch.validate();
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInputError("d_alpha: alpha outside [0,1]");
  std::vector<double> terms(batch.size(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i)
    if (batch.confidence[i] <= alpha)
      terms[i] = (batch.correct[i] ? 1.0 : 0.0) - batch.confidence[i];
  return std::abs(pairwise_sum(terms) / static_cast<double>(batch.size()));
}

std::vector<CurvePoint> cumulative_curves(const PredictionBatch& batch,
                                          std::span<const double> grid) {
  batch.validate();
  const double n = static_cast<double>(batch.size());
  std::vector<CurvePoint> points;
  points.reserve(grid.size());
  std::vector<double> acc_terms(batch.size()), conf_terms(batch.size());
  for (double alpha : grid) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw InvalidInputError("cumulative_curves: alpha outside [0,1]");
    for (std::size_t i = 0; i < batch.size(); ++i) {
      bool in = batch.confidence[i] <= alpha;
      acc_terms[i] = (in && batch.correct[i]) ? 1.0 : 0.0;
      conf_terms[i] = in ? batch.confidence[i] : 0.0;
    }
    points.push_back({alpha, pairwise_sum(acc_terms) / n, pairwise_sum(conf_terms) / n});
  }
  return points;
}

namespace {

// Shared pairwise pass for both ESD estimators: per anchor i, the mean and
// the sum of squares of g_ij = I(z_j <= z_i)(correct_j - z_j) over j != i.
struct EsdRow {
  double mean = 0.0;
  double sum_sq = 0.0;
};

std::vector<EsdRow> esd_rows(const PredictionBatch& batch) {
  const std::size_t n = batch.size();
  std::vector<double> diff(n);
  for (std::size_t j = 0; j < n; ++j)
    diff[j] = (batch.correct[j] ? 1.0 : 0.0) - batch.confidence[j];

  std::vector<EsdRow> rows(n);
  std::vector<double> g(n - 1), g2(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double gij = batch.confidence[j] <= batch.confidence[i] ? diff[j] : 0.0;
      g[m] = gij;
      g2[m] = gij * gij;
      ++m;
    }
    rows[i].mean = pairwise_sum(g) / static_cast<double>(n - 1);
    rows[i].sum_sq = pairwise_sum(g2);
  }
  return rows;
}

}  // namespace

double esd_naive(const PredictionBatch& batch) {
  batch.validate();
  if (batch.size() < 2) throw InvalidInputError("esd_naive: need at least 2 samples");
  auto rows = esd_rows(batch);
  std::vector<double> terms(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) terms[i] = rows[i].mean * rows[i].mean;
  return pairwise_sum(terms) / static_cast<double>(rows.size());
}

MetricValueWithGrad esd_unbiased(const PredictionBatch& batch) {
  batch.validate();
  const std::size_t n = batch.size();
  if (n < 3) throw InvalidInputError("esd_unbiased: need at least 3 samples");
  auto rows = esd_rows(batch);

  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double gbar = rows[i].mean;
    double s2 = (rows[i].sum_sq - static_cast<double>(n - 1) * gbar * gbar) /
                static_cast<double>(n - 2);
    terms[i] = gbar * gbar - s2 / static_cast<double>(n - 1);
  }

  MetricValueWithGrad out;
  out.value = pairwise_sum(terms) / static_cast<double>(n);
  out.grad_is_exact_away_from_ties = !has_tied_confidences(batch);

  // d/dz_m = 2/(N(N-1)) * sum_{i != m} I(z_m <= z_i) *
  //          [-gbar_i + (g_im - gbar_i)/(N-2)]
  out.grad_confidence.assign(n, 0.0);
  std::vector<double> contrib(n - 1);
  for (std::size_t m = 0; m < n; ++m) {
    double dm = (batch.correct[m] ? 1.0 : 0.0) - batch.confidence[m];
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == m) continue;
      double value = 0.0;
      if (batch.confidence[m] <= batch.confidence[i]) {
        double gim = dm;  // indicator is 1, so g_im = correct_m - z_m
        value = -rows[i].mean + (gim - rows[i].mean) / static_cast<double>(n - 2);
      }
      contrib[c++] = value;
    }
    out.grad_confidence[m] =
        2.0 * pairwise_sum(contrib) / (static_cast<double>(n) * static_cast<double>(n - 1));
  }
  return out;
}

MetricValueWithGrad mmce(const PredictionBatch& batch, const MMCEConfig& cfg) {
  batch.validate();
  if (!(cfg.kernel_width > 0.0)) throw InvalidInputError("mmce: kernel width must be positive");
  const std::size_t n = batch.size();
  const double phi = cfg.kernel_width;
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i)
    diff[i] = (batch.correct[i] ? 1.0 : 0.0) - batch.confidence[i];

  // Row sums of d_j k(z_m, z_j) and of d_j k sign(z_m - z_j), reused for the
  // squared measure and its gradient.
  std::vector<double> row_plain(n), row_signed(n);
  std::vector<double> buf_plain(n), buf_signed(n);
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t j = 0; j < n; ++j) {
      double gap = batch.confidence[m] - batch.confidence[j];
      double k = std::exp(-std::abs(gap) / phi);
      double s = gap > 0.0 ? 1.0 : (gap < 0.0 ? -1.0 : 0.0);
      buf_plain[j] = diff[j] * k;
      buf_signed[j] = diff[j] * k * s;
    }
    row_plain[m] = pairwise_sum(buf_plain);
    row_signed[m] = pairwise_sum(buf_signed);
  }

  std::vector<double> sq_terms(n);
  for (std::size_t m = 0; m < n; ++m) sq_terms[m] = diff[m] * row_plain[m];
  const double n2 = static_cast<double>(n) * static_cast<double>(n);
  double squared = pairwise_sum(sq_terms) / n2;

  MetricValueWithGrad out;
  out.value = std::sqrt(std::max(squared, 0.0));
  out.grad_confidence.assign(n, 0.0);
  out.grad_is_exact_away_from_ties = !has_tied_confidences(batch);
  if (squared <= 1e-18) {
    // At (numerical) zero the sqrt is not differentiable; clamp to 0.
    out.grad_is_exact_away_from_ties = false;
    return out;
  }
  for (std::size_t m = 0; m < n; ++m) {
    double ds = (-2.0 * row_plain[m] - 2.0 * diff[m] / phi * row_signed[m]) / n2;
    out.grad_confidence[m] = ds / (2.0 * out.value);
  }
  return out;
}

MetricValueWithGrad sb_ece(const PredictionBatch& batch, const SBECEConfig& cfg) {
  batch.validate();
  if (cfg.num_bins < 2) throw InvalidInputError("sb_ece: num_bins must be >= 2");
  if (!(cfg.temperature > 0.0)) throw InvalidInputError("sb_ece: temperature must be positive");
  const std::size_t n = batch.size();
  const auto m_bins = static_cast<std::size_t>(cfg.num_bins);
  std::vector<double> centers(m_bins);
  for (std::size_t j = 0; j < m_bins; ++j)
    centers[j] = (static_cast<double>(j) + 0.5) / static_cast<double>(cfg.num_bins);

  auto memberships = [&](double z, std::vector<double>& u) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m_bins; ++j) {
      double zc = z - centers[j];
      u[j] = -zc * zc / cfg.temperature;
      best = std::max(best, u[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < m_bins; ++j) {
      u[j] = std::exp(u[j] - best);
      denom += u[j];
    }
    for (std::size_t j = 0; j < m_bins; ++j) u[j] /= denom;
  };

  // Column accumulators per bin: soft mass, hit mass, confidence mass.
  std::vector<std::vector<double>> mass(m_bins), hits(m_bins), confs(m_bins);
  std::vector<double> u(m_bins);
  for (std::size_t i = 0; i < n; ++i) {
    memberships(batch.confidence[i], u);
    double hit = batch.correct[i] ? 1.0 : 0.0;
    for (std::size_t j = 0; j < m_bins; ++j) {
      mass[j].push_back(u[j]);
      hits[j].push_back(u[j] * hit);
      confs[j].push_back(u[j] * batch.confidence[i]);
    }
  }

  MetricValueWithGrad out;
  out.grad_confidence.assign(n, 0.0);
  std::vector<double> sign_by_bin(m_bins, 0.0);
  std::vector<bool> included(m_bins, false);
  for (std::size_t j = 0; j < m_bins; ++j) {
    double uj = pairwise_sum(mass[j]);
    double wj = uj / static_cast<double>(n);
    if (wj < 1e-12) continue;
    included[j] = true;
    double acc = pairwise_sum(hits[j]) / uj;
    double conf = pairwise_sum(confs[j]) / uj;
    out.value += wj * std::abs(acc - conf);
    sign_by_bin[j] = acc - conf > 0.0 ? 1.0 : (acc - conf < 0.0 ? -1.0 : 0.0);
    if (acc == conf) out.grad_is_exact_away_from_ties = false;
  }

  // Gradient of (1/N) sum_j s_j sum_i u_j(z_i)(correct_i - z_i):
  // per sample both the membership weights and the residual differentiate.
  std::vector<double> du(m_bins);
  for (std::size_t i = 0; i < n; ++i) {
    double z = batch.confidence[i];
    memberships(z, u);
    double mean_slope = 0.0;
    for (std::size_t j = 0; j < m_bins; ++j) {
      du[j] = -2.0 * (z - centers[j]) / cfg.temperature;  // d log-score / dz
      mean_slope += u[j] * du[j];
    }
    double residual = (batch.correct[i] ? 1.0 : 0.0) - z;
    double total = 0.0;
    for (std::size_t j = 0; j < m_bins; ++j) {
      if (!included[j]) continue;
      double du_j = u[j] * (du[j] - mean_slope);
      total += sign_by_bin[j] * (du_j * residual - u[j]);
    }
    out.grad_confidence[i] = total / static_cast<double>(n);
  }
  return out;
}

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::none: return "none";
    case ObjectiveKind::esd: return "esd";
    case ObjectiveKind::mmce: return "mmce";
    case ObjectiveKind::sb_ece: return "sb_ece";
    case ObjectiveKind::ece_soft: return "ece_soft";
  }
  return "none";
}

ObjectiveKind objective_kind_from_string(const std::string& name) {
  if (name == "none") return ObjectiveKind::none;
  if (name == "esd") return ObjectiveKind::esd;
  if (name == "mmce") return ObjectiveKind::mmce;
  if (name == "sb_ece") return ObjectiveKind::sb_ece;
  if (name == "ece_soft") return ObjectiveKind::ece_soft;
  throw ConfigError("unknown objective kind '" + name + "'");
}

void CalibrationObjectiveSpec::validate() const {
  if (lambda < 0.0) throw ConfigError("objective: lambda must be nonnegative");
  if (kind == ObjectiveKind::mmce && !(mmce.kernel_width > 0.0))
    throw ConfigError("objective: mmce kernel width must be positive");
  if (kind == ObjectiveKind::sb_ece &&
      (sb_ece.num_bins < 2 || !(sb_ece.temperature > 0.0)))
    throw ConfigError("objective: sb_ece needs num_bins >= 2 and temperature > 0");
  if (kind == ObjectiveKind::ece_soft && ece.num_bins < 1)
    throw ConfigError("objective: ece_soft needs num_bins >= 1");
}

MetricValueWithGrad CalibrationObjectiveSpec::evaluate(const PredictionBatch& batch) const {
  switch (kind) {
    case ObjectiveKind::esd: return esd_unbiased(batch);
    case ObjectiveKind::mmce: return calib::mmce(batch, mmce);
    case ObjectiveKind::sb_ece: return calib::sb_ece(batch, sb_ece);
    case ObjectiveKind::ece_soft: return ece_soft_loss(batch, ece);
    case ObjectiveKind::none: break;
  }
  throw InvalidInputError("objective 'none' has no loss to evaluate");
}

std::string CalibrationObjectiveSpec::describe() const {
  std::string s = to_string(kind);
  switch (kind) {
    case ObjectiveKind::mmce: s += "(phi=" + format_round_trip(mmce.kernel_width) + ")"; break;
    case ObjectiveKind::sb_ece:
      s += "(M=" + std::to_string(sb_ece.num_bins) +
           ",T=" + format_round_trip(sb_ece.temperature) + ")";
      break;
    case ObjectiveKind::ece_soft: s += "(B=" + std::to_string(ece.num_bins) + ")"; break;
    default: break;
  }
  if (kind != ObjectiveKind::none) s += " lambda=" + format_round_trip(lambda);
  return s;
}

}  // namespace calib
