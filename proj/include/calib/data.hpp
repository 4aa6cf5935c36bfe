#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "calib/numerics.hpp"

namespace calib {

struct LabeledExample {
  std::vector<double> features;
  int label = 0;
};

struct Dataset {
  std::string name;
  int num_classes = 0;
  std::vector<LabeledExample> examples;

  std::size_t size() const { return examples.size(); }
  int feature_dim() const { return examples.empty() ? 0 : static_cast<int>(examples[0].features.size()); }
  // Checks C >= 2, labels in range, consistent finite feature vectors.
  void validate() const;

  // Feature matrix / label vector views used by the trainer.
  Matrix feature_matrix() const;
  std::vector<int> labels() const;
};

// A probability vector over C classes; entries nonnegative, sum within 1e-9 of 1.
class ProbVector {
 public:
  explicit ProbVector(std::vector<double> entries);
  const std::vector<double>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  // Ties broken toward the lowest class index.
  int arg_max() const;
  double max_entry() const { return entries_[static_cast<std::size_t>(arg_max())]; }

 private:
  std::vector<double> entries_;
};

// Predicted-class view of a batch: the max-softmax confidence of each sample
// and whether the predicted class was the true one. Every calibration metric
// consumes exactly this.
struct PredictionBatch {
  std::vector<double> confidence;
  std::vector<std::uint8_t> correct;

  std::size_t size() const { return confidence.size(); }
  void validate() const;
  double accuracy() const;
  double mean_confidence() const;
};

struct SplitSpec {
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  // Fraction of the train portion carved off as the calibration subset.
  double interleave_frac = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DatasetSplits {
  Dataset train_core;  // NLL subset of the train portion
  Dataset cal;         // calibration subset carved from the train portion
  Dataset val;
  Dataset test;
};

// Numerically stable (max-subtracted) softmax.
ProbVector softmax(std::span<const double> logits);

// Row-wise softmax of a logit matrix.
Matrix softmax_rows(const Matrix& logits);

PredictionBatch to_prediction_batch(const std::vector<ProbVector>& probs,
                                    std::span<const int> labels);
PredictionBatch to_prediction_batch(const Matrix& probs, std::span<const int> labels);

// Seeded Fisher-Yates shuffle, then contiguous slices in the order
// train / val / test, with the calibration subset taken from the front of
// the train slice. Partitions are disjoint and exhaustive.
DatasetSplits split_dataset(const Dataset& dataset, const SplitSpec& spec);

struct SyntheticTaskSpec {
  int classes = 3;
  int per_class = 100;
  double separation = 4.0;   // distance between adjacent class means
  double label_noise = 0.0;  // probability a label is resampled uniformly
  std::uint64_t seed = 0;
  int dim = 2;               // feature dimension, 2..8
  std::string name = "synthetic";

  void validate() const;
};

// Gaussian blobs with class means `separation` apart on a circle in the
// first two dimensions; unit variance per coordinate. Label noise resamples
// the stated fraction of labels uniformly, which caps achievable accuracy
// and gives NLL training something to get overconfident about.
Dataset generate_synthetic(const SyntheticTaskSpec& spec);

// IDX (big-endian) readers; magic 0x00000803 for image tensors,
// 0x00000801 for label vectors. Pixels are scaled to [0, 1].
std::vector<std::vector<double>> read_idx_images(const std::filesystem::path& path);
std::vector<int> read_idx_labels(const std::filesystem::path& path);
Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const std::string& name);

// CSV of examples: header "x0,...,x{F-1},label", one row per example.
Dataset read_csv_examples(const std::filesystem::path& path);
void write_csv_examples(const std::filesystem::path& path, const Dataset& dataset);

// CSV of predictions: header "confidence,correct", correct as 1/0,
// confidences serialized with round-trip precision.
PredictionBatch read_csv_predictions(const std::filesystem::path& path);
void write_csv_predictions(const std::filesystem::path& path, const PredictionBatch& batch);

// CSV of logit rows: header "logit_0,...,logit_{C-1},label".
void write_csv_logits(const std::filesystem::path& path, const Matrix& logits,
                      std::span<const int> labels);
struct LogitDump {
  Matrix logits;
  std::vector<int> labels;
};
LogitDump read_csv_logits(const std::filesystem::path& path);

// JSON envelope {name, num_classes, feature_dim, rows}; each row is the
// feature vector with the integer label appended.
void write_dataset_json(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset_json(const std::filesystem::path& path);

}  // namespace calib
