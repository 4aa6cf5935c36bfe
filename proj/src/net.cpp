#include "calib/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "calib/data.hpp"
#include "calib/errors.hpp"
#include "calib/rng.hpp"

namespace calib {

using nlohmann::json;

std::size_t DenseNetwork::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += weights[l].data.size() + biases[l].size();
  return n;
}

void DenseNetwork::validate() const {
  if (layer_sizes.size() < 2) throw InvalidInputError("network needs at least input and output");
  if (weights.size() != layer_sizes.size() - 1 || biases.size() != weights.size())
    throw InvalidInputError("network: layer count mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto out = static_cast<std::size_t>(layer_sizes[l + 1]);
    const auto in = static_cast<std::size_t>(layer_sizes[l]);
    if (weights[l].rows != out || weights[l].cols != in || biases[l].size() != out)
      throw InvalidInputError("network: shape mismatch at layer " + std::to_string(l));
    for (double w : weights[l].data)
      if (!std::isfinite(w)) throw InvalidInputError("network: non-finite weight");
    for (double b : biases[l])
      if (!std::isfinite(b)) throw InvalidInputError("network: non-finite bias");
  }
}

Gradients Gradients::zeros_like(const DenseNetwork& net) {
  Gradients g;
  g.weights.reserve(net.weights.size());
  g.biases.reserve(net.biases.size());
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    g.weights.emplace_back(net.weights[l].rows, net.weights[l].cols);
    g.biases.emplace_back(net.biases[l].size(), 0.0);
  }
  return g;
}

void Gradients::add_scaled(const Gradients& other, double scale) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (std::size_t k = 0; k < weights[l].data.size(); ++k)
      weights[l].data[k] += scale * other.weights[l].data[k];
    for (std::size_t k = 0; k < biases[l].size(); ++k)
      biases[l][k] += scale * other.biases[l][k];
  }
}

double Gradients::max_abs() const {
  double m = 0.0;
  for (const auto& w : weights)
    for (double v : w.data) m = std::max(m, std::abs(v));
  for (const auto& b : biases)
    for (double v : b) m = std::max(m, std::abs(v));
  return m;
}

OptimizerState OptimizerState::create(const DenseNetwork& net, const AdamWConfig& cfg) {
  OptimizerState state;
  state.config = cfg;
  state.step = 0;
  state.first_moment = Gradients::zeros_like(net);
  state.second_moment = Gradients::zeros_like(net);
  return state;
}

DenseNetwork init_network(std::vector<int> layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw InvalidInputError("init_network: need >= 2 layer sizes");
  for (int s : layer_sizes)
    if (s < 1) throw InvalidInputError("init_network: layer sizes must be positive");
  DenseNetwork net;
  net.layer_sizes = std::move(layer_sizes);
  SplitMix64 rng(seed);
  for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
    const auto in = static_cast<std::size_t>(net.layer_sizes[l]);
    const auto out = static_cast<std::size_t>(net.layer_sizes[l + 1]);
    Matrix w(out, in);
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    for (double& v : w.data) v = (2.0 * rng.next_double() - 1.0) * bound;
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(out, 0.0);
  }
  return net;
}

Matrix forward(const DenseNetwork& net, const Matrix& features, ForwardTrace* trace) {
  if (static_cast<int>(features.cols) != net.input_dim())
    throw InvalidInputError("forward: feature width does not match network input");
  if (trace) {
    trace->activations.clear();
    trace->pre_activations.clear();
    trace->activations.push_back(features);
  }
  Matrix current = features;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Matrix& w = net.weights[l];
    Matrix next(current.rows, w.rows);
    for (std::size_t i = 0; i < current.rows; ++i) {
      for (std::size_t o = 0; o < w.rows; ++o) {
        double sum = net.biases[l][o];
        for (std::size_t k = 0; k < w.cols; ++k) sum += w.at(o, k) * current.at(i, k);
        next.at(i, o) = sum;
      }
    }
    if (trace) trace->pre_activations.push_back(next);
    if (l + 1 < net.num_layers())
      for (double& v : next.data) v = v > 0.0 ? v : 0.0;  // ReLU on hidden layers
    if (trace) trace->activations.push_back(next);
    current = std::move(next);
  }
  return current;
}

std::pair<double, Matrix> nll_loss_and_grad(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows != labels.size())
    throw InvalidInputError("nll: logits/labels length mismatch");
  if (logits.rows == 0) throw InvalidInputError("nll: empty batch");
  const double n = static_cast<double>(logits.rows);
  Matrix grad(logits.rows, logits.cols);
  std::vector<double> losses(logits.rows);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols)
      throw InvalidInputError("nll: label out of range at row " + std::to_string(i));
    auto row = logits.row(i);
    double max_logit = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (double v : row) denom += std::exp(v - max_logit);
    double lse = max_logit + std::log(denom);
    losses[i] = lse - row[static_cast<std::size_t>(y)];
    for (std::size_t c = 0; c < logits.cols; ++c) {
      double p = std::exp(row[c] - lse);
      grad.at(i, c) = (p - (static_cast<int>(c) == y ? 1.0 : 0.0)) / n;
    }
  }
  return {pairwise_sum(losses) / n, std::move(grad)};
}

Gradients backward(const DenseNetwork& net, const ForwardTrace& trace, const Matrix& dlogits) {
  const std::size_t layers = net.num_layers();
  if (trace.pre_activations.size() != layers || trace.activations.size() != layers + 1)
    throw InvalidInputError("backward: trace does not match network");
  Gradients grads = Gradients::zeros_like(net);
  Matrix delta = dlogits;  // gradient w.r.t. the current layer's pre-activation
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& input = trace.activations[l];
    Matrix& dw = grads.weights[l];
    auto& db = grads.biases[l];
    for (std::size_t i = 0; i < delta.rows; ++i) {
      for (std::size_t o = 0; o < dw.rows; ++o) {
        double d = delta.at(i, o);
        db[o] += d;
        for (std::size_t k = 0; k < dw.cols; ++k) dw.at(o, k) += d * input.at(i, k);
      }
    }
    if (l == 0) break;
    const Matrix& w = net.weights[l];
    const Matrix& pre = trace.pre_activations[l - 1];
    Matrix prev(delta.rows, w.cols);
    for (std::size_t i = 0; i < delta.rows; ++i) {
      for (std::size_t k = 0; k < w.cols; ++k) {
        double sum = 0.0;
        for (std::size_t o = 0; o < w.rows; ++o) sum += delta.at(i, o) * w.at(o, k);
        prev.at(i, k) = pre.at(i, k) > 0.0 ? sum : 0.0;  // ReLU mask
      }
    }
    delta = std::move(prev);
  }
  return grads;
}

Matrix calibration_loss_grad_to_logits(const Matrix& probs, std::span<const int> labels,
                                       const CalibrationObjectiveSpec& objective) {
  if (!objective.differentiable())
    throw InvalidInputError("calibration gradient requested for objective 'none'");
  PredictionBatch batch = to_prediction_batch(probs, labels);
  MetricValueWithGrad metric = objective.evaluate(batch);

  Matrix dlogits(probs.rows, probs.cols);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    // Recover the argmax column (lowest index wins ties, as in the batch).
    std::size_t k = 0;
    for (std::size_t c = 1; c < probs.cols; ++c)
      if (probs.at(i, c) > probs.at(i, k)) k = c;
    double pk = probs.at(i, k);
    double g = metric.grad_confidence[i];
    for (std::size_t c = 0; c < probs.cols; ++c) {
      double jac = pk * ((c == k ? 1.0 : 0.0) - probs.at(i, c));
      dlogits.at(i, c) = g * jac;
    }
  }
  return dlogits;
}

void optimizer_step(DenseNetwork& net, const Gradients& grads, OptimizerState& state) {
  const AdamWConfig& cfg = state.config;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  auto update = [&](double& param, double grad, double& m, double& v) {
    param -= cfg.lr * cfg.weight_decay * param;  // decoupled decay
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
    double m_hat = m / bc1;
    double v_hat = v / bc2;
    param -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  };

  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    for (std::size_t k = 0; k < net.weights[l].data.size(); ++k)
      update(net.weights[l].data[k], grads.weights[l].data[k],
             state.first_moment.weights[l].data[k], state.second_moment.weights[l].data[k]);
    for (std::size_t k = 0; k < net.biases[l].size(); ++k)
      update(net.biases[l][k], grads.biases[l][k], state.first_moment.biases[l][k],
             state.second_moment.biases[l][k]);
  }
}

namespace {

json gradients_to_json(const Gradients& g) {
  json layers = json::array();
  for (std::size_t l = 0; l < g.weights.size(); ++l)
    layers.push_back({{"weight", g.weights[l].data}, {"bias", g.biases[l]}});
  return layers;
}

void gradients_from_json(const json& j, Gradients& g) {
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    auto w = j.at(l).at("weight").get<std::vector<double>>();
    auto b = j.at(l).at("bias").get<std::vector<double>>();
    if (w.size() != g.weights[l].data.size() || b.size() != g.biases[l].size())
      throw ParseError("checkpoint: moment shape mismatch", 0);
    g.weights[l].data = std::move(w);
    g.biases[l] = std::move(b);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DenseNetwork& net,
                     const OptimizerState& state, std::uint64_t seed,
                     const std::string& config_hash) {
  net.validate();
  json layers = json::array();
  for (std::size_t l = 0; l < net.weights.size(); ++l)
    layers.push_back({{"weight", net.weights[l].data}, {"bias", net.biases[l]}});
  json doc{{"schema", "calib.checkpoint/1"},
           {"layer_sizes", net.layer_sizes},
           {"layers", std::move(layers)},
           {"optimizer",
            {{"lr", state.config.lr},
             {"beta1", state.config.beta1},
             {"beta2", state.config.beta2},
             {"eps", state.config.eps},
             {"weight_decay", state.config.weight_decay},
             {"step", state.step},
             {"first_moment", gradients_to_json(state.first_moment)},
             {"second_moment", gradients_to_json(state.second_moment)}}},
           {"step", state.step},
           {"seed", seed},
           {"config_hash", config_hash}};
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string(), 0);
  out << doc.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  json doc;
  try {
    in >> doc;
    if (doc.at("schema").get<std::string>() != "calib.checkpoint/1")
      throw ParseError("checkpoint: unknown schema", 0);
    Checkpoint ckpt;
    ckpt.net.layer_sizes = doc.at("layer_sizes").get<std::vector<int>>();
    const auto& layers = doc.at("layers");
    for (std::size_t l = 0; l + 1 < ckpt.net.layer_sizes.size(); ++l) {
      const auto out_dim = static_cast<std::size_t>(ckpt.net.layer_sizes[l + 1]);
      const auto in_dim = static_cast<std::size_t>(ckpt.net.layer_sizes[l]);
      Matrix w(out_dim, in_dim);
      w.data = layers.at(l).at("weight").get<std::vector<double>>();
      if (w.data.size() != out_dim * in_dim) throw ParseError("checkpoint: weight shape", 0);
      ckpt.net.weights.push_back(std::move(w));
      ckpt.net.biases.push_back(layers.at(l).at("bias").get<std::vector<double>>());
    }
    ckpt.net.validate();
    const auto& opt = doc.at("optimizer");
    AdamWConfig cfg;
    cfg.lr = opt.at("lr").get<double>();
    cfg.beta1 = opt.at("beta1").get<double>();
    cfg.beta2 = opt.at("beta2").get<double>();
    cfg.eps = opt.at("eps").get<double>();
    cfg.weight_decay = opt.at("weight_decay").get<double>();
    ckpt.state = OptimizerState::create(ckpt.net, cfg);
    ckpt.state.step = opt.at("step").get<long>();
    gradients_from_json(opt.at("first_moment"), ckpt.state.first_moment);
    gradients_from_json(opt.at("second_moment"), ckpt.state.second_moment);
    ckpt.seed = doc.at("seed").get<std::uint64_t>();
    ckpt.config_hash = doc.at("config_hash").get<std::string>();
    return ckpt;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint json: " + std::string(e.what()), 0);
  }
}

}  // namespace calib
