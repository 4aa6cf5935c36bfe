#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "calib/data.hpp"
#include "calib/metrics.hpp"
#include "calib/net.hpp"

namespace calib {

struct TrainConfig {
  std::vector<int> hidden = {64, 64};
  int epochs = 60;
  int batch_size = 128;
  double lr = 1e-3;
  double weight_decay = 1e-2;
  std::uint64_t seed = 0;
  CalibrationObjectiveSpec objective;
  int eval_bins = 20;

  void validate() const;
};

struct EvalMetrics {
  double accuracy = 0.0;
  double ece = 0.0;
  double nll = 0.0;
};

struct EpochStats {
  double train_acc = 0.0;
  double train_ece = 0.0;
  double train_nll = 0.0;
  double objective_value = 0.0;  // auxiliary loss on the full cal split
  double val_acc = 0.0;
  double val_ece = 0.0;
  double val_nll = 0.0;
  double wall_clock_s = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  EvalMetrics final_test;
  long total_steps = 0;
  double total_wall_clock_s = 0.0;
};

struct TrainResult {
  DenseNetwork net;
  TrainHistory history;
};

Matrix predict_logits(const DenseNetwork& net, const Dataset& data);
PredictionBatch predict_batch(const DenseNetwork& net, const Dataset& data);
EvalMetrics evaluate_model(const DenseNetwork& net, const Dataset& data, int bins);

// Gradient contributions of one optimizer step, kept separate so the two
// data streams can never leak into each other: the NLL part sees only the
// train minibatch, the calibration part only the cal minibatch.
struct StepGradients {
  Gradients nll;
  Gradients calibration;
  double nll_value = 0.0;
  double objective_value = 0.0;
  bool has_calibration = false;
};

StepGradients compute_step_gradients(const DenseNetwork& net, const Matrix& train_features,
                                     std::span<const int> train_labels,
                                     const Matrix* cal_features,
                                     std::span<const int> cal_labels,
                                     const CalibrationObjectiveSpec& objective);

// Interleaved training: every step takes an NLL gradient on a train-core
// minibatch and, when lambda > 0, adds lambda times the calibration
// objective's gradient on an independently drawn cal minibatch. With
// objective `none` the loop is plain NLL training on the undivided train
// split (train_core plus cal). Calibration minibatches equal the train batch
// size capped at |cal| and cycle circularly with a reshuffle every epoch.
TrainResult train(const DatasetSplits& splits, DenseNetwork net, const TrainConfig& cfg);

// Convenience: init a fresh network from cfg.seed and train it.
TrainResult train(const DatasetSplits& splits, const TrainConfig& cfg);

// --- sweeps and model selection -------------------------------------------

struct TrialRecord {
  CalibrationObjectiveSpec objective;
  std::uint64_t seed = 0;
  double val_acc = 0.0;
  double val_ece = 0.0;
  double test_acc = 0.0;
  double test_ece = 0.0;
  double wall_clock_s = 0.0;
  long steps = 0;
};

// One grid point aggregated across seeds.
struct CandidateSummary {
  CalibrationObjectiveSpec objective;
  double val_acc = 0.0;
  double val_ece = 0.0;
  double test_acc = 0.0;
  double test_ece = 0.0;
  int num_seeds = 0;
};

struct SelectionResult {
  bool ok = false;
  CandidateSummary chosen;
  double baseline_val_acc = 0.0;
  double accuracy_budget = 0.015;  // 1.5 accuracy points
  std::vector<CandidateSummary> table;
  std::string message;
};

// Among candidates with val accuracy >= baseline - budget, pick the lowest
// val ECE. No silent fallback: if nothing qualifies the result carries the
// full table and ok = false.
SelectionResult select_by_rule(std::span<const CandidateSummary> table,
                               double baseline_val_acc, double budget = 0.015);

struct CostAccounting {
  long runs = 0;           // grid trainings, excluding the shared baseline
  long baseline_runs = 0;
  long total_steps = 0;
  double total_wall_clock_s = 0.0;
};

struct SweepResult {
  SelectionResult selection;
  std::vector<TrialRecord> trials;  // baseline trials included, kind = none
  CostAccounting cost;
};

// Trains one model per (lambda, seed) plus one baseline per seed, aggregates
// validation metrics per lambda, and applies the selection rule.
SweepResult lambda_sweep(const DatasetSplits& splits, const TrainConfig& config_template,
                         std::span<const double> lambda_grid,
                         std::span<const std::uint64_t> seeds);

// Second stage of the sequential protocol: lambda stays at the value chosen
// by a prior lambda_sweep (carried in config_template.objective.lambda) and
// the objective's internal hyperparameter sweeps its grid. Only mmce (phi)
// and sb_ece (T) have one; calling this for esd is an error. Cost is
// cumulative over both stages.
SweepResult inner_hparam_sweep(const DatasetSplits& splits,
                               const TrainConfig& config_template,
                               std::span<const double> inner_grid,
                               std::span<const std::uint64_t> seeds,
                               const SweepResult& lambda_stage);

// Grids used in the sweeps: lambda 0.2..1.0 by 0.2 then 2..10 by 1 (14
// values); phi {0.2, 0.4, 0.6, 0.8}; T {1e-4, 1e-3, 1e-2, 1e-1}.
std::vector<double> default_lambda_grid();
std::vector<double> default_phi_grid();
std::vector<double> default_temperature_grid();

// Runs of the full sequential protocol per seed: 14 for esd and ece_soft,
// 14 + 4 = 18 for mmce and sb_ece.
long expected_runs_per_seed(ObjectiveKind kind);

}  // namespace calib
