#include "calib/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "calib/errors.hpp"
#include "calib/rng.hpp"

namespace calib {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Matrix gather_features(const Dataset& data, std::span<const std::size_t> rows) {
  Matrix m(rows.size(), static_cast<std::size_t>(data.feature_dim()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& src = data.examples[rows[i]].features;
    std::copy(src.begin(), src.end(), m.row(i).begin());
  }
  return m;
}

std::vector<int> gather_labels(const Dataset& data, std::span<const std::size_t> rows) {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = data.examples[rows[i]].label;
  return out;
}

Dataset merge(const Dataset& a, const Dataset& b) {
  Dataset out = a;
  out.name = a.name + "+" + b.name;
  out.examples.insert(out.examples.end(), b.examples.begin(), b.examples.end());
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("train: weight decay must be nonnegative");
  if (eval_bins < 1) throw ConfigError("train: eval_bins must be >= 1");
  if (hidden.empty()) throw ConfigError("train: need at least one hidden layer");
  for (int h : hidden)
    if (h < 1) throw ConfigError("train: hidden sizes must be positive");
  objective.validate();
}

Matrix predict_logits(const DenseNetwork& net, const Dataset& data) {
  return forward(net, data.feature_matrix());
}

PredictionBatch predict_batch(const DenseNetwork& net, const Dataset& data) {
  Matrix probs = softmax_rows(predict_logits(net, data));
  auto labels = data.labels();
  return to_prediction_batch(probs, labels);
}

EvalMetrics evaluate_model(const DenseNetwork& net, const Dataset& data, int bins) {
  Matrix logits = predict_logits(net, data);
  auto labels = data.labels();
  PredictionBatch batch = to_prediction_batch(softmax_rows(logits), labels);
  EvalMetrics m;
  m.accuracy = batch.accuracy();
  m.ece = ece(batch, ECEConfig{bins});
  m.nll = nll_loss_and_grad(logits, labels).first;
  return m;
}

StepGradients compute_step_gradients(const DenseNetwork& net, const Matrix& train_features,
                                     std::span<const int> train_labels,
                                     const Matrix* cal_features,
                                     std::span<const int> cal_labels,
                                     const CalibrationObjectiveSpec& objective) {
  StepGradients out;
  {
    ForwardTrace trace;
    Matrix logits = forward(net, train_features, &trace);
    auto [loss, dlogits] = nll_loss_and_grad(logits, train_labels);
    out.nll_value = loss;
    out.nll = backward(net, trace, dlogits);
  }
  if (cal_features != nullptr) {
    ForwardTrace trace;
    Matrix logits = forward(net, *cal_features, &trace);
    Matrix probs = softmax_rows(logits);
    PredictionBatch batch = to_prediction_batch(probs, cal_labels);
    out.objective_value = objective.evaluate(batch).value;
    Matrix dlogits = calibration_loss_grad_to_logits(probs, cal_labels, objective);
    out.calibration = backward(net, trace, dlogits);
    out.has_calibration = true;
  }
  return out;
}

TrainResult train(const DatasetSplits& splits, DenseNetwork net, const TrainConfig& cfg) {
  cfg.validate();
  net.validate();
  const auto start = Clock::now();
  const bool baseline = cfg.objective.kind == ObjectiveKind::none;
  const bool use_cal = !baseline && cfg.objective.lambda > 0.0;

  Dataset nll_data = baseline ? merge(splits.train_core, splits.cal) : splits.train_core;
  nll_data.validate();
  const Dataset& cal_data = splits.cal;

  std::size_t cal_batch = 0;
  if (use_cal) {
    cal_data.validate();
    cal_batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), cal_data.size());
    if (cal_batch < cfg.objective.min_batch())
      throw ConfigError("train: calibration minibatch of " + std::to_string(cal_batch) +
                        " is below the " + std::to_string(cfg.objective.min_batch()) +
                        "-sample minimum of objective " + to_string(cfg.objective.kind));
  }

  // Independent shuffle streams so skipping the cal side (lambda = 0 or
  // baseline) leaves the train-side trajectory untouched.
  SplitMix64 train_rng(derive_seed(cfg.seed, 1));
  SplitMix64 cal_rng(derive_seed(cfg.seed, 2));

  OptimizerState state = OptimizerState::create(
      net, AdamWConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  TrainResult result;
  result.history.epochs.reserve(static_cast<std::size_t>(cfg.epochs));
  std::vector<std::size_t> cal_order;
  std::size_t cal_cursor = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    std::vector<std::size_t> order = shuffled_indices(nll_data.size(), train_rng);
    if (use_cal) {
      cal_order = shuffled_indices(cal_data.size(), cal_rng);
      cal_cursor = 0;
    }
    double objective_sum = 0.0;
    long objective_count = 0;

    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::span<const std::size_t> rows(order.data() + begin, end - begin);
      Matrix x = gather_features(nll_data, rows);
      std::vector<int> y = gather_labels(nll_data, rows);

      Matrix cal_x;
      std::vector<int> cal_y;
      if (use_cal) {
        // Circular walk over the shuffled cal order keeps every cal
        // minibatch at full size.
        std::vector<std::size_t> cal_rows(cal_batch);
        for (std::size_t k = 0; k < cal_batch; ++k) {
          cal_rows[k] = cal_order[cal_cursor];
          cal_cursor = (cal_cursor + 1) % cal_order.size();
        }
        cal_x = gather_features(cal_data, cal_rows);
        cal_y = gather_labels(cal_data, cal_rows);
      }

      StepGradients grads = compute_step_gradients(net, x, y, use_cal ? &cal_x : nullptr,
                                                   cal_y, cfg.objective);
      Gradients total = std::move(grads.nll);
      if (grads.has_calibration) {
        total.add_scaled(grads.calibration, cfg.objective.lambda);
        objective_sum += grads.objective_value;
        ++objective_count;
      }
      optimizer_step(net, total, state);
      ++result.history.total_steps;
    }

    EpochStats stats;
    EvalMetrics train_m = evaluate_model(net, nll_data, cfg.eval_bins);
    EvalMetrics val_m = evaluate_model(net, splits.val, cfg.eval_bins);
    stats.train_acc = train_m.accuracy;
    stats.train_ece = train_m.ece;
    stats.train_nll = train_m.nll;
    stats.val_acc = val_m.accuracy;
    stats.val_ece = val_m.ece;
    stats.val_nll = val_m.nll;
    stats.objective_value = objective_count > 0 ? objective_sum / objective_count : 0.0;
    stats.wall_clock_s = seconds_since(epoch_start);
    result.history.epochs.push_back(stats);
  }

  result.history.final_test = evaluate_model(net, splits.test, cfg.eval_bins);
  result.history.total_wall_clock_s = seconds_since(start);
  result.net = std::move(net);
  return result;
}

TrainResult train(const DatasetSplits& splits, const TrainConfig& cfg) {
  std::vector<int> sizes;
  sizes.push_back(splits.train_core.feature_dim());
  for (int h : cfg.hidden) sizes.push_back(h);
  sizes.push_back(splits.train_core.num_classes);
  return train(splits, init_network(std::move(sizes), cfg.seed), cfg);
}

SelectionResult select_by_rule(std::span<const CandidateSummary> table,
                               double baseline_val_acc, double budget) {
  SelectionResult sel;
  sel.baseline_val_acc = baseline_val_acc;
  sel.accuracy_budget = budget;
  sel.table.assign(table.begin(), table.end());
  const double floor = baseline_val_acc - budget;
  bool found = false;
  for (const auto& cand : table) {
    if (cand.val_acc < floor) continue;
    if (!found || cand.val_ece < sel.chosen.val_ece) {
      sel.chosen = cand;
      found = true;
    }
  }
  sel.ok = found;
  sel.message = found ? "selected " + sel.chosen.objective.describe()
                      : "no candidate within " + format_round_trip(budget) +
                            " accuracy of baseline " + format_round_trip(baseline_val_acc);
  return sel;
}

namespace {

struct GridOutcome {
  std::vector<TrialRecord> trials;
  std::vector<CandidateSummary> candidates;
  long steps = 0;
  double wall = 0.0;
};

TrialRecord run_trial(const DatasetSplits& splits, TrainConfig cfg) {
  TrainResult res = train(splits, cfg);
  TrialRecord rec;
  rec.objective = cfg.objective;
  rec.seed = cfg.seed;
  const EpochStats& last = res.history.epochs.back();
  rec.val_acc = last.val_acc;
  rec.val_ece = last.val_ece;
  rec.test_acc = res.history.final_test.accuracy;
  rec.test_ece = res.history.final_test.ece;
  rec.wall_clock_s = res.history.total_wall_clock_s;
  rec.steps = res.history.total_steps;
  return rec;
}

// Runs the grid of objective variants over all seeds and aggregates
// per-variant means.
GridOutcome run_grid(const DatasetSplits& splits, const TrainConfig& config_template,
                     std::span<const CalibrationObjectiveSpec> variants,
                     std::span<const std::uint64_t> seeds) {
  GridOutcome out;
  for (const auto& objective : variants) {
    CandidateSummary cand;
    cand.objective = objective;
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = config_template;
      cfg.objective = objective;
      cfg.seed = seed;
      TrialRecord rec = run_trial(splits, cfg);
      cand.val_acc += rec.val_acc;
      cand.val_ece += rec.val_ece;
      cand.test_acc += rec.test_acc;
      cand.test_ece += rec.test_ece;
      ++cand.num_seeds;
      out.steps += rec.steps;
      out.wall += rec.wall_clock_s;
      out.trials.push_back(std::move(rec));
    }
    const double k = static_cast<double>(cand.num_seeds);
    cand.val_acc /= k;
    cand.val_ece /= k;
    cand.test_acc /= k;
    cand.test_ece /= k;
    out.candidates.push_back(std::move(cand));
  }
  return out;
}

}  // namespace

SweepResult lambda_sweep(const DatasetSplits& splits, const TrainConfig& config_template,
                         std::span<const double> lambda_grid,
                         std::span<const std::uint64_t> seeds) {
  if (lambda_grid.empty()) throw ConfigError("lambda_sweep: empty grid");
  if (seeds.empty()) throw ConfigError("lambda_sweep: empty seed list");
  if (config_template.objective.kind == ObjectiveKind::none)
    throw ConfigError("lambda_sweep: objective must not be 'none'");

  SweepResult result;

  // Shared baseline: plain NLL on the undivided train split, one per seed.
  double baseline_val_acc = 0.0;
  for (std::uint64_t seed : seeds) {
    TrainConfig cfg = config_template;
    cfg.objective = CalibrationObjectiveSpec{};
    cfg.seed = seed;
    TrialRecord rec = run_trial(splits, cfg);
    baseline_val_acc += rec.val_acc;
    result.cost.total_steps += rec.steps;
    result.cost.total_wall_clock_s += rec.wall_clock_s;
    result.trials.push_back(std::move(rec));
  }
  baseline_val_acc /= static_cast<double>(seeds.size());
  result.cost.baseline_runs = static_cast<long>(seeds.size());

  std::vector<CalibrationObjectiveSpec> variants;
  for (double lambda : lambda_grid) {
    CalibrationObjectiveSpec obj = config_template.objective;
    obj.lambda = lambda;
    variants.push_back(obj);
  }
  GridOutcome grid = run_grid(splits, config_template, variants, seeds);
  result.trials.insert(result.trials.end(), grid.trials.begin(), grid.trials.end());
  result.cost.runs = static_cast<long>(lambda_grid.size() * seeds.size());
  result.cost.total_steps += grid.steps;
  result.cost.total_wall_clock_s += grid.wall;
  result.selection = select_by_rule(grid.candidates, baseline_val_acc);
  return result;
}

SweepResult inner_hparam_sweep(const DatasetSplits& splits,
                               const TrainConfig& config_template,
                               std::span<const double> inner_grid,
                               std::span<const std::uint64_t> seeds,
                               const SweepResult& lambda_stage) {
  const ObjectiveKind kind = config_template.objective.kind;
  if (kind != ObjectiveKind::mmce && kind != ObjectiveKind::sb_ece)
    throw InvalidInputError("inner_hparam_sweep: objective " + to_string(kind) +
                            " has no internal hyperparameter");
  if (inner_grid.empty()) throw ConfigError("inner_hparam_sweep: empty grid");
  if (seeds.empty()) throw ConfigError("inner_hparam_sweep: empty seed list");
  if (!lambda_stage.selection.ok)
    throw ConfigError("inner_hparam_sweep: lambda stage did not select a candidate");

  TrainConfig tmpl = config_template;
  tmpl.objective.lambda = lambda_stage.selection.chosen.objective.lambda;

  std::vector<CalibrationObjectiveSpec> variants;
  for (double value : inner_grid) {
    CalibrationObjectiveSpec obj = tmpl.objective;
    if (kind == ObjectiveKind::mmce)
      obj.mmce.kernel_width = value;
    else
      obj.sb_ece.temperature = value;
    variants.push_back(obj);
  }

  SweepResult result;
  GridOutcome grid = run_grid(splits, tmpl, variants, seeds);
  result.trials = std::move(grid.trials);
  result.selection = select_by_rule(grid.candidates, lambda_stage.selection.baseline_val_acc);
  // Sequential protocol: cost covers both stages.
  result.cost.runs =
      lambda_stage.cost.runs + static_cast<long>(inner_grid.size() * seeds.size());
  result.cost.baseline_runs = lambda_stage.cost.baseline_runs;
  result.cost.total_steps = lambda_stage.cost.total_steps + grid.steps;
  result.cost.total_wall_clock_s = lambda_stage.cost.total_wall_clock_s + grid.wall;
  return result;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid{0.2, 0.4, 0.6, 0.8, 1.0};
  for (int k = 2; k <= 10; ++k) grid.push_back(static_cast<double>(k));
  return grid;
}

std::vector<double> default_phi_grid() { return {0.2, 0.4, 0.6, 0.8}; }

std::vector<double> default_temperature_grid() { return {1e-4, 1e-3, 1e-2, 1e-1}; }

long expected_runs_per_seed(ObjectiveKind kind) {
  const long lambda_runs = static_cast<long>(default_lambda_grid().size());
  switch (kind) {
    case ObjectiveKind::mmce:
      return lambda_runs + static_cast<long>(default_phi_grid().size());
    case ObjectiveKind::sb_ece:
      return lambda_runs + static_cast<long>(default_temperature_grid().size());
    case ObjectiveKind::esd:
    case ObjectiveKind::ece_soft:
      return lambda_runs;
    case ObjectiveKind::none:
      break;
  }
  return 0;
}

}  // namespace calib
