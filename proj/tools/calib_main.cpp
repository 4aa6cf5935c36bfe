// Command-line front end. All real work lives in the library (calib/cli.hpp);
// this file only maps flags and config-file keys onto the command structs.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "calib/cli.hpp"
#include "calib/errors.hpp"

namespace {

void add_split_options(CLI::App* cmd, calib::SplitSpec& split) {
  cmd->add_option("--train-frac", split.train_frac, "train fraction")->capture_default_str();
  cmd->add_option("--val-frac", split.val_frac, "validation fraction")->capture_default_str();
  cmd->add_option("--test-frac", split.test_frac, "test fraction")->capture_default_str();
  cmd->add_option("--interleave", split.interleave_frac,
                  "fraction of the train portion held out for the calibration loss")
      ->capture_default_str();
  cmd->add_option("--split-seed", split.seed, "shuffle seed for the split")
      ->capture_default_str();
}

void add_train_options(CLI::App* cmd, calib::TrainConfig& train, std::string& objective_name) {
  cmd->add_option("--hidden", train.hidden, "hidden layer sizes")->capture_default_str();
  cmd->add_option("--epochs", train.epochs, "training epochs")->capture_default_str();
  cmd->add_option("--batch-size", train.batch_size, "minibatch size")->capture_default_str();
  cmd->add_option("--lr", train.lr, "learning rate")->capture_default_str();
  cmd->add_option("--weight-decay", train.weight_decay, "decoupled weight decay")
      ->capture_default_str();
  cmd->add_option("--seed", train.seed, "training seed")->capture_default_str();
  cmd->add_option("--eval-bins", train.eval_bins, "ECE bins used for reporting")
      ->capture_default_str();
  cmd->add_option("--objective", objective_name,
                  "auxiliary loss: none|esd|mmce|sb_ece|ece_soft")
      ->capture_default_str();
  cmd->add_option("--lambda", train.objective.lambda, "auxiliary loss weight")
      ->capture_default_str();
  cmd->add_option("--phi", train.objective.mmce.kernel_width, "MMCE kernel width")
      ->capture_default_str();
  cmd->add_option("--sb-bins", train.objective.sb_ece.num_bins, "SB-ECE bin count")
      ->capture_default_str();
  cmd->add_option("--sb-temperature", train.objective.sb_ece.temperature,
                  "SB-ECE softening temperature")
      ->capture_default_str();
  cmd->add_option("--loss-bins", train.objective.ece.num_bins,
                  "bin count when the loss is ece_soft")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calib: train, measure, and verify confidence calibration"};
  app.set_config("--config", "", "INI config file (one section per subcommand)");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  int rc = calib::kExitOk;

  // generate
  calib::GenerateConfig gen;
  auto* cmd_gen = app.add_subcommand("generate", "write a synthetic blob dataset")
                      ->configurable()
                      ->fallthrough();
  cmd_gen->add_option("--classes", gen.task.classes, "number of classes")->capture_default_str();
  cmd_gen->add_option("--per-class", gen.task.per_class, "examples per class")
      ->capture_default_str();
  cmd_gen->add_option("--separation", gen.task.separation, "distance between class means")
      ->capture_default_str();
  cmd_gen->add_option("--label-noise", gen.task.label_noise,
                      "fraction of labels resampled uniformly")
      ->capture_default_str();
  cmd_gen->add_option("--seed", gen.task.seed, "generator seed")->capture_default_str();
  cmd_gen->add_option("--dim", gen.task.dim, "feature dimension (2-8)")->capture_default_str();
  cmd_gen->add_option("--name", gen.task.name, "dataset name")->capture_default_str();
  cmd_gen->add_option("--out", gen.out_path, "output dataset JSON");
  cmd_gen->callback([&] { rc = calib::cmd_generate(gen, std::cout); });

  // train
  calib::RunConfig run;
  std::string run_objective = "none";
  auto* cmd_train = app.add_subcommand("train", "train a dense classifier")->configurable()
                      ->fallthrough();
  cmd_train->add_option("--dataset", run.dataset_path, "dataset JSON envelope");
  cmd_train->add_option("--out-dir", run.out_dir, "output directory")->capture_default_str();
  cmd_train->add_option("--name", run.run_name, "run name (output file prefix)")
      ->capture_default_str();
  cmd_train->add_option("--verbosity", run.verbosity, "0 = quiet")->capture_default_str();
  add_split_options(cmd_train, run.split);
  add_train_options(cmd_train, run.train, run_objective);
  cmd_train->callback([&] {
    run.train.objective.kind = calib::objective_kind_from_string(run_objective);
    rc = calib::cmd_train(run, std::cout);
  });

  // sweep
  calib::SweepConfig sweep;
  std::string sweep_objective = "esd";
  auto* cmd_sweep = app.add_subcommand("sweep", "lambda (+ internal hyperparameter) grid search")
                        ->configurable()
                      ->fallthrough();
  cmd_sweep->add_option("--dataset", sweep.dataset_path, "dataset JSON envelope");
  cmd_sweep->add_option("--out-dir", sweep.out_dir, "output directory")->capture_default_str();
  cmd_sweep->add_option("--name", sweep.run_name, "sweep name")->capture_default_str();
  cmd_sweep->add_option("--verbosity", sweep.verbosity, "0 = quiet")->capture_default_str();
  cmd_sweep->add_option("--grid", sweep.lambda_grid, "lambda grid (default: stock 14-point grid)");
  cmd_sweep->add_option("--inner-grid", sweep.inner_grid,
                        "internal hyperparameter grid for mmce/sb_ece");
  cmd_sweep->add_option("--seeds", sweep.num_seeds, "trials per grid point")
      ->capture_default_str();
  cmd_sweep->add_option("--base-seed", sweep.base_seed, "seed the per-trial seeds derive from")
      ->capture_default_str();
  add_split_options(cmd_sweep, sweep.split);
  add_train_options(cmd_sweep, sweep.train, sweep_objective);
  cmd_sweep->callback([&] {
    sweep.train.objective.kind = calib::objective_kind_from_string(sweep_objective);
    rc = calib::cmd_sweep(sweep, std::cout);
  });

  // evaluate
  calib::EvaluateConfig eval;
  auto* cmd_eval = app.add_subcommand("evaluate", "compute calibration metrics for a batch")
                       ->configurable()
                      ->fallthrough();
  cmd_eval->add_option("--predictions", eval.predictions_path, "CSV confidence,correct");
  cmd_eval->add_option("--logits", eval.logits_path, "CSV logits+label");
  cmd_eval->add_option("--metrics", eval.metrics,
                       "subset of ece esd_unbiased esd_naive mmce sb_ece (default all)");
  cmd_eval->add_option("--bins", eval.ece_bins, "ECE bins")->capture_default_str();
  cmd_eval->add_option("--phi", eval.mmce_phi, "MMCE kernel width")->capture_default_str();
  cmd_eval->add_option("--sb-bins", eval.sb_bins, "SB-ECE bins")->capture_default_str();
  cmd_eval->add_option("--sb-temperature", eval.sb_temperature, "SB-ECE temperature")
      ->capture_default_str();
  cmd_eval->add_option("--d-alpha-points", eval.d_alpha_points,
                       "emit d_alpha on a uniform grid of this many points");
  cmd_eval->add_option("--out", eval.out_path, "also write the metrics JSON here");
  cmd_eval->callback([&] { rc = calib::cmd_evaluate(eval, std::cout); });

  // calibrate
  calib::CalibrateConfig cal;
  auto* cmd_cal = app.add_subcommand("calibrate", "fit a post-hoc calibrator on logit dumps")
                      ->configurable()
                      ->fallthrough();
  cmd_cal->add_option("--val", cal.val_logits_path, "validation logits CSV");
  cmd_cal->add_option("--test", cal.test_logits_path, "test logits CSV");
  cmd_cal->add_option("--method", cal.method, "ts | vs")->capture_default_str();
  cmd_cal->add_option("--bins", cal.ece_bins, "ECE bins")->capture_default_str();
  cmd_cal->add_option("--out", cal.out_path, "also write the result JSON here");
  cmd_cal->callback([&] { rc = calib::cmd_calibrate(cal, std::cout); });

  // verify
  calib::VerifyConfig verify;
  auto* cmd_verify = app.add_subcommand("verify", "Monte Carlo checks of the estimator claims")
                         ->configurable()
                      ->fallthrough();
  cmd_verify->add_option("--study", verify.study,
                         "all | unbiasedness | theorem1 | consistency | gradient")
      ->capture_default_str();
  cmd_verify->add_flag("--smoke", verify.smoke, "run with R=100 for a quick check");
  cmd_verify->add_option("--gamma", verify.gamma, "power-miscalibration exponent")
      ->capture_default_str();
  cmd_verify->add_option("--seed", verify.seed, "master seed")->capture_default_str();
  cmd_verify->add_option("--out", verify.out_path, "also write the study JSON here");
  cmd_verify->callback([&] { rc = calib::cmd_verify(verify, std::cout); });

  // curves
  calib::CurvesConfig curves;
  auto* cmd_curves = app.add_subcommand("curves", "cumulative accuracy/confidence curve CSV")
                         ->configurable()
                      ->fallthrough();
  cmd_curves->add_option("--predictions", curves.predictions_path, "CSV confidence,correct")
      ;
  cmd_curves->add_option("--points", curves.grid_points, "grid points")->capture_default_str();
  cmd_curves->add_option("--out", curves.out_path, "output CSV");
  cmd_curves->callback([&] { rc = calib::cmd_curves(curves, std::cout); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return calib::kExitUsage;
  } catch (const calib::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return calib::kExitUsage;
  } catch (const calib::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return calib::kExitRuntime;
  }
  return rc;
}
