#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "calib/metrics.hpp"
#include "calib/numerics.hpp"

namespace calib {

// Fully connected ReLU classifier. Hidden layers use ReLU, the output layer
// emits raw logits so post-hoc calibrators can rescale them.
struct DenseNetwork {
  std::vector<int> layer_sizes;        // [F, h1, ..., hL, C]
  std::vector<Matrix> weights;         // per layer, out x in
  std::vector<std::vector<double>> biases;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t parameter_count() const;
  void validate() const;
};

// Everything backward() needs from the matching forward() call.
struct ForwardTrace {
  std::vector<Matrix> activations;      // activations[0] is the input batch
  std::vector<Matrix> pre_activations;  // per layer, before ReLU / identity
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  static Gradients zeros_like(const DenseNetwork& net);
  void add_scaled(const Gradients& other, double scale);
  double max_abs() const;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

struct OptimizerState {
  AdamWConfig config;
  long step = 0;
  Gradients first_moment;
  Gradients second_moment;

  static OptimizerState create(const DenseNetwork& net, const AdamWConfig& cfg);
};

// Kaiming-uniform fan-in init: weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)),
// biases zero. Deterministic per seed.
DenseNetwork init_network(std::vector<int> layer_sizes, std::uint64_t seed);

// Batched forward pass; returns logits (B x C). Pass a trace to enable backprop.
Matrix forward(const DenseNetwork& net, const Matrix& features, ForwardTrace* trace = nullptr);

// Mean negative log-likelihood and its gradient (softmax - onehot)/B.
std::pair<double, Matrix> nll_loss_and_grad(const Matrix& logits, std::span<const int> labels);

// Exact reverse-mode gradients for the trace produced by forward().
Gradients backward(const DenseNetwork& net, const ForwardTrace& trace, const Matrix& dlogits);

// Chains the objective's confidence-gradient through the softmax Jacobian row
// of each sample's argmax class. The argmax choice itself is a constant.
Matrix calibration_loss_grad_to_logits(const Matrix& probs, std::span<const int> labels,
                                       const CalibrationObjectiveSpec& objective);

// One AdamW step: decoupled weight decay applied directly to the parameters,
// bias-corrected moment estimates for the gradient part.
void optimizer_step(DenseNetwork& net, const Gradients& grads, OptimizerState& state);

// Checkpoint round-trip: layer sizes, row-major weights/biases, optimizer
// moments, step counter, seed, and the config hash of the producing run.
void save_checkpoint(const std::filesystem::path& path, const DenseNetwork& net,
                     const OptimizerState& state, std::uint64_t seed,
                     const std::string& config_hash);
struct Checkpoint {
  DenseNetwork net;
  OptimizerState state;
  std::uint64_t seed = 0;
  std::string config_hash;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace calib
