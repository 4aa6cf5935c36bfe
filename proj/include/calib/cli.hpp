#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "calib/data.hpp"
#include "calib/oracle.hpp"
#include "calib/train.hpp"

namespace calib {

inline constexpr const char* kVersion = "0.1.0";

// Process exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;       // bad flags or config
inline constexpr int kExitRuntime = 2;     // precondition violated at run time
inline constexpr int kExitVerifyFail = 3;  // a verification study failed

// $CALIB_OUT_DIR if set, otherwise "runs".
std::string default_output_dir();

nlohmann::json objective_to_json(const CalibrationObjectiveSpec& objective);
CalibrationObjectiveSpec objective_from_json(const nlohmann::json& j);
nlohmann::json history_to_json(const TrainHistory& history);
nlohmann::json trial_to_json(const TrialRecord& trial);
nlohmann::json selection_to_json(const SelectionResult& selection);

// --- generate -------------------------------------------------------------

struct GenerateConfig {
  SyntheticTaskSpec task;
  std::string out_path;  // dataset JSON envelope

  void validate() const;
};
int cmd_generate(const GenerateConfig& cfg, std::ostream& log);

// --- train ------------------------------------------------------------------

// Everything one training run needs: dataset, split, trainer settings,
// output location.
struct RunConfig {
  std::string dataset_path;
  SplitSpec split;
  TrainConfig train;
  std::string out_dir = default_output_dir();
  std::string run_name = "run";
  int verbosity = 1;

  void validate() const;
  nlohmann::json to_json() const;
  std::string config_hash() const;
};
int cmd_train(const RunConfig& cfg, std::ostream& log);

// --- sweep ------------------------------------------------------------------

struct SweepConfig {
  std::string dataset_path;
  SplitSpec split;
  TrainConfig train;  // objective.kind selects the method under sweep
  std::vector<double> lambda_grid;  // empty = default grid
  std::vector<double> inner_grid;   // empty = default grid for the method
  int num_seeds = 1;
  std::uint64_t base_seed = 0;
  std::string out_dir = default_output_dir();
  std::string run_name = "sweep";
  int verbosity = 1;

  void validate() const;
  nlohmann::json to_json() const;
  std::string config_hash() const;
};

struct ExperimentReport {
  nlohmann::json config_snapshot;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<nlohmann::json> trials;
  nlohmann::json selection;
  CostAccounting cost;

  nlohmann::json to_json() const;
};

// Throws if a report is structurally malformed; called before every write.
void validate_experiment_report(const nlohmann::json& report);

int cmd_sweep(const SweepConfig& cfg, std::ostream& log, nlohmann::json* report_out = nullptr);

// --- evaluate ---------------------------------------------------------------

struct EvaluateConfig {
  std::string predictions_path;  // CSV confidence,correct
  std::string logits_path;       // CSV logits+label (exclusive with above)
  std::vector<std::string> metrics;  // empty = all value metrics
  int ece_bins = 20;
  double mmce_phi = 0.4;
  int sb_bins = 15;
  double sb_temperature = 0.01;
  int d_alpha_points = 0;  // >0 adds a uniform d_alpha grid to the output
  std::string out_path;    // empty = stdout only

  void validate() const;
};
int cmd_evaluate(const EvaluateConfig& cfg, std::ostream& log,
                 nlohmann::json* out = nullptr);

// --- calibrate ----------------------------------------------------------------

struct CalibrateConfig {
  std::string val_logits_path;
  std::string test_logits_path;
  std::string method = "ts";  // ts | vs
  int ece_bins = 20;
  std::string out_path;

  void validate() const;
};
int cmd_calibrate(const CalibrateConfig& cfg, std::ostream& log,
                  nlohmann::json* out = nullptr);

// --- verify -------------------------------------------------------------------

struct VerifyConfig {
  std::string study = "all";  // all | unbiasedness | theorem1 | consistency | gradient
  bool smoke = false;         // R = 100 instead of the full replication counts
  double gamma = 2.0;         // power model used by the miscalibrated studies
  std::uint64_t seed = 20240901;
  std::string out_path;

  void validate() const;
};
int cmd_verify(const VerifyConfig& cfg, std::ostream& log, nlohmann::json* out = nullptr);

// --- curves -------------------------------------------------------------------

struct CurvesConfig {
  std::string predictions_path;
  int grid_points = 101;
  std::string out_path;  // CSV alpha,cum_acc,cum_conf,d_alpha

  void validate() const;
};
int cmd_curves(const CurvesConfig& cfg, std::ostream& log);

}  // namespace calib
