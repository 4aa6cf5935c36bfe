#include "calib/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "calib/errors.hpp"
#include "calib/rng.hpp"

namespace calib {

using nlohmann::json;

void Dataset::validate() const {
  if (examples.empty()) throw InvalidInputError("dataset '" + name + "' is empty");
  if (num_classes < 2) throw InvalidInputError("dataset '" + name + "' needs at least 2 classes");
  const std::size_t dim = examples[0].features.size();
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (ex.features.size() != dim)
      throw InvalidInputError("dataset '" + name + "': inconsistent feature length at row " +
                              std::to_string(i));
    if (ex.label < 0 || ex.label >= num_classes)
      throw InvalidInputError("dataset '" + name + "': label out of range at row " +
                              std::to_string(i));
    for (double f : ex.features)
      if (!std::isfinite(f))
        throw InvalidInputError("dataset '" + name + "': non-finite feature at row " +
                                std::to_string(i));
  }
}

Matrix Dataset::feature_matrix() const {
  Matrix m(examples.size(), static_cast<std::size_t>(feature_dim()));
  for (std::size_t i = 0; i < examples.size(); ++i)
    std::copy(examples[i].features.begin(), examples[i].features.end(), m.row(i).begin());
  return m;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) out[i] = examples[i].label;
  return out;
}

ProbVector::ProbVector(std::vector<double> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw InvalidInputError("ProbVector: empty");
  double sum = 0.0;
  for (double p : entries_) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInputError("ProbVector: entry outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidInputError("ProbVector: entries must sum to 1");
}

int ProbVector::arg_max() const {
  int best = 0;
  for (std::size_t c = 1; c < entries_.size(); ++c)
    if (entries_[c] > entries_[best]) best = static_cast<int>(c);
  return best;
}

void PredictionBatch::validate() const {
  if (confidence.empty()) throw InvalidInputError("PredictionBatch: empty batch");
  if (confidence.size() != correct.size())
    throw InvalidInputError("PredictionBatch: confidence/correct length mismatch");
  for (double z : confidence)
    if (!(z >= 0.0 && z <= 1.0))
      throw InvalidInputError("PredictionBatch: confidence outside [0,1]");
}

double PredictionBatch::accuracy() const {
  std::vector<double> hits(correct.size());
  for (std::size_t i = 0; i < correct.size(); ++i) hits[i] = correct[i] ? 1.0 : 0.0;
  return pairwise_sum(hits) / static_cast<double>(correct.size());
}

double PredictionBatch::mean_confidence() const {
  return pairwise_sum(confidence) / static_cast<double>(confidence.size());
}

void SplitSpec::validate() const {
  if (!(train_frac > 0.0 && val_frac > 0.0 && test_frac > 0.0))
    throw ConfigError("SplitSpec: train/val/test fractions must be positive");
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw ConfigError("SplitSpec: train+val+test fractions must sum to 1");
  if (!(interleave_frac > 0.0 && interleave_frac < 1.0))
    throw ConfigError("SplitSpec: interleave fraction must lie in (0,1)");
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.empty()) throw InvalidInputError("softmax: empty logits");
  double max_logit = logits[0];
  for (double x : logits) {
    if (!std::isfinite(x)) throw InvalidInputError("softmax: non-finite logit");
    max_logit = std::max(max_logit, x);
  }
  std::vector<double> out(logits.size());
  double denom = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = std::exp(logits[c] - max_logit);
    denom += out[c];
  }
  for (double& p : out) p /= denom;
  return ProbVector(std::move(out));
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix probs(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    ProbVector p = softmax(logits.row(i));
    std::copy(p.entries().begin(), p.entries().end(), probs.row(i).begin());
  }
  return probs;
}

PredictionBatch to_prediction_batch(const std::vector<ProbVector>& probs,
                                    std::span<const int> labels) {
  if (probs.size() != labels.size())
    throw InvalidInputError("to_prediction_batch: probs/labels length mismatch");
  if (probs.empty()) throw InvalidInputError("to_prediction_batch: empty batch");
  PredictionBatch batch;
  batch.confidence.reserve(probs.size());
  batch.correct.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= probs[i].size())
      throw InvalidInputError("to_prediction_batch: label out of range at row " +
                              std::to_string(i));
    int k = probs[i].arg_max();
    batch.confidence.push_back(probs[i].entries()[static_cast<std::size_t>(k)]);
    batch.correct.push_back(k == labels[i] ? 1 : 0);
  }
  return batch;
}

PredictionBatch to_prediction_batch(const Matrix& probs, std::span<const int> labels) {
  std::vector<ProbVector> rows;
  rows.reserve(probs.rows);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    auto r = probs.row(i);
    rows.emplace_back(std::vector<double>(r.begin(), r.end()));
  }
  return to_prediction_batch(rows, labels);
}

namespace {

Dataset take_slice(const Dataset& d, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t end, const std::string& suffix) {
  Dataset out;
  out.name = d.name + "/" + suffix;
  out.num_classes = d.num_classes;
  out.examples.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.examples.push_back(d.examples[order[i]]);
  return out;
}

}  // namespace

DatasetSplits split_dataset(const Dataset& dataset, const SplitSpec& spec) {
  dataset.validate();
  spec.validate();
  const std::size_t n = dataset.size();
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val_frac * static_cast<double>(n)));
  if (n_train + n_val >= n) throw ConfigError("split_dataset: no samples left for test split");
  const std::size_t n_test = n - n_train - n_val;
  const auto n_cal =
      static_cast<std::size_t>(std::llround(spec.interleave_frac * static_cast<double>(n_train)));
  if (n_cal == 0 || n_cal >= n_train)
    throw ConfigError("split_dataset: interleave fraction leaves an empty subset");
  if (n_val == 0 || n_test == 0) throw ConfigError("split_dataset: empty val or test split");

  SplitMix64 rng(spec.seed);
  std::vector<std::size_t> order = shuffled_indices(n, rng);

  DatasetSplits splits;
  splits.cal = take_slice(dataset, order, 0, n_cal, "cal");
  splits.train_core = take_slice(dataset, order, n_cal, n_train, "train");
  splits.val = take_slice(dataset, order, n_train, n_train + n_val, "val");
  splits.test = take_slice(dataset, order, n_train + n_val, n, "test");
  return splits;
}

void SyntheticTaskSpec::validate() const {
  if (classes < 2) throw ConfigError("synthetic: need at least 2 classes");
  if (per_class < 1) throw ConfigError("synthetic: per_class must be >= 1");
  if (!(label_noise >= 0.0 && label_noise < 0.5))
    throw ConfigError("synthetic: label_noise must lie in [0, 0.5)");
  if (dim < 2 || dim > 8) throw ConfigError("synthetic: dim must lie in [2, 8]");
  if (!(separation >= 0.0)) throw ConfigError("synthetic: separation must be nonnegative");
}

Dataset generate_synthetic(const SyntheticTaskSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.seed);
  Dataset d;
  d.name = spec.name;
  d.num_classes = spec.classes;
  d.examples.reserve(static_cast<std::size_t>(spec.classes) * spec.per_class);

  // Adjacent means on a circle are chord-distance `separation` apart.
  const double radius =
      spec.classes == 2 ? spec.separation / 2.0
                        : spec.separation / (2.0 * std::sin(std::numbers::pi / spec.classes));
  std::vector<std::vector<double>> means(static_cast<std::size_t>(spec.classes),
                                         std::vector<double>(static_cast<std::size_t>(spec.dim), 0.0));
  for (int c = 0; c < spec.classes; ++c) {
    double angle = 2.0 * std::numbers::pi * c / spec.classes;
    means[static_cast<std::size_t>(c)][0] = radius * std::cos(angle);
    means[static_cast<std::size_t>(c)][1] = radius * std::sin(angle);
  }

  for (int c = 0; c < spec.classes; ++c) {
    for (int i = 0; i < spec.per_class; ++i) {
      LabeledExample ex;
      ex.features.resize(static_cast<std::size_t>(spec.dim));
      for (int f = 0; f < spec.dim; ++f)
        ex.features[static_cast<std::size_t>(f)] =
            means[static_cast<std::size_t>(c)][static_cast<std::size_t>(f)] + rng.next_gaussian();
      ex.label = c;
      if (spec.label_noise > 0.0 && rng.next_double() < spec.label_noise)
        ex.label = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spec.classes)));
      d.examples.push_back(std::move(ex));
    }
  }
  return d;
}

namespace {

std::uint32_t read_be32(std::istream& in, long& offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw ParseError("idx: truncated header", offset);
  offset += 4;
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  return in;
}

}  // namespace

std::vector<std::vector<double>> read_idx_images(const std::filesystem::path& path) {
  auto in = open_binary(path);
  long offset = 0;
  std::uint32_t magic = read_be32(in, offset);
  if (magic != 0x00000803u)
    throw ParseError("idx: bad image magic in " + path.string(), offset);
  std::uint32_t count = read_be32(in, offset);
  std::uint32_t rows = read_be32(in, offset);
  std::uint32_t cols = read_be32(in, offset);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  std::vector<std::vector<double>> images(count);
  std::vector<unsigned char> buf(pixels);
  for (std::uint32_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
    if (!in) throw ParseError("idx: truncated image data in " + path.string(), offset);
    offset += static_cast<long>(pixels);
    images[i].resize(pixels);
    for (std::size_t p = 0; p < pixels; ++p) images[i][p] = buf[p] / 255.0;
  }
  return images;
}

std::vector<int> read_idx_labels(const std::filesystem::path& path) {
  auto in = open_binary(path);
  long offset = 0;
  std::uint32_t magic = read_be32(in, offset);
  if (magic != 0x00000801u)
    throw ParseError("idx: bad label magic in " + path.string(), offset);
  std::uint32_t count = read_be32(in, offset);
  std::vector<int> labels(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    char c;
    in.read(&c, 1);
    if (!in) throw ParseError("idx: truncated label data in " + path.string(), offset);
    ++offset;
    labels[i] = static_cast<unsigned char>(c);
  }
  return labels;
}

Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 const std::string& name) {
  auto xs = read_idx_images(images);
  auto ys = read_idx_labels(labels);
  if (xs.size() != ys.size())
    throw ParseError("idx: image/label count mismatch", static_cast<long>(xs.size()));
  Dataset d;
  d.name = name;
  int max_label = 0;
  for (int y : ys) max_label = std::max(max_label, y);
  d.num_classes = std::max(2, max_label + 1);
  d.examples.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    d.examples.push_back({std::move(xs[i]), ys[i]});
  d.validate();
  return d;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, long line) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("csv: not a number: '" + s + "'", line);
  }
}

int parse_int(const std::string& s, long line) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("csv: not an integer: '" + s + "'", line);
  }
}

std::ifstream open_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  return in;
}

}  // namespace

Dataset read_csv_examples(const std::filesystem::path& path) {
  auto in = open_text(path);
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError("csv: empty file " + path.string(), 1);
  ++lineno;
  auto header = split_fields(line);
  if (header.size() < 2 || header.back() != "label")
    throw ParseError("csv: expected header 'x0,...,label' in " + path.string(), lineno);
  const std::size_t dim = header.size() - 1;

  Dataset d;
  d.name = path.stem().string();
  int max_label = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != dim + 1)
      throw ParseError("csv: expected " + std::to_string(dim + 1) + " fields", lineno);
    LabeledExample ex;
    ex.features.reserve(dim);
    for (std::size_t f = 0; f < dim; ++f) ex.features.push_back(parse_double(fields[f], lineno));
    ex.label = parse_int(fields[dim], lineno);
    if (ex.label < 0) throw ParseError("csv: negative label", lineno);
    max_label = std::max(max_label, ex.label);
    d.examples.push_back(std::move(ex));
  }
  d.num_classes = std::max(2, max_label + 1);
  d.validate();
  return d;
}

void write_csv_examples(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string(), 0);
  const int dim = dataset.feature_dim();
  for (int f = 0; f < dim; ++f) out << "x" << f << ",";
  out << "label\n";
  for (const auto& ex : dataset.examples) {
    for (double v : ex.features) out << format_round_trip(v) << ",";
    out << ex.label << "\n";
  }
}

PredictionBatch read_csv_predictions(const std::filesystem::path& path) {
  auto in = open_text(path);
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError("csv: empty file " + path.string(), 1);
  ++lineno;
  auto header = split_fields(line);
  if (header.size() != 2 || header[0] != "confidence" || header[1] != "correct")
    throw ParseError("csv: expected header 'confidence,correct' in " + path.string(), lineno);

  PredictionBatch batch;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != 2) throw ParseError("csv: expected 2 fields", lineno);
    double z = parse_double(fields[0], lineno);
    if (!(z >= 0.0 && z <= 1.0))
      throw ParseError("csv: confidence " + fields[0] + " outside [0,1]", lineno);
    int c = parse_int(fields[1], lineno);
    if (c != 0 && c != 1) throw ParseError("csv: correct must be 0 or 1", lineno);
    batch.confidence.push_back(z);
    batch.correct.push_back(static_cast<std::uint8_t>(c));
  }
  batch.validate();
  return batch;
}

void write_csv_predictions(const std::filesystem::path& path, const PredictionBatch& batch) {
  batch.validate();
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string(), 0);
  out << "confidence,correct\n";
  for (std::size_t i = 0; i < batch.size(); ++i)
    out << format_round_trip(batch.confidence[i]) << "," << int(batch.correct[i]) << "\n";
}

void write_csv_logits(const std::filesystem::path& path, const Matrix& logits,
                      std::span<const int> labels) {
  if (logits.rows != labels.size())
    throw InvalidInputError("write_csv_logits: row/label count mismatch");
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string(), 0);
  for (std::size_t c = 0; c < logits.cols; ++c) out << "logit_" << c << ",";
  out << "label\n";
  for (std::size_t i = 0; i < logits.rows; ++i) {
    for (double v : logits.row(i)) out << format_round_trip(v) << ",";
    out << labels[i] << "\n";
  }
}

LogitDump read_csv_logits(const std::filesystem::path& path) {
  auto in = open_text(path);
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw ParseError("csv: empty file " + path.string(), 1);
  ++lineno;
  auto header = split_fields(line);
  if (header.size() < 2 || header.back() != "label")
    throw ParseError("csv: expected header 'logit_0,...,label' in " + path.string(), lineno);
  const std::size_t classes = header.size() - 1;

  std::vector<double> values;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != classes + 1)
      throw ParseError("csv: expected " + std::to_string(classes + 1) + " fields", lineno);
    for (std::size_t c = 0; c < classes; ++c) values.push_back(parse_double(fields[c], lineno));
    labels.push_back(parse_int(fields[classes], lineno));
  }
  if (labels.empty()) throw ParseError("csv: no logit rows in " + path.string(), lineno);
  LogitDump dump;
  dump.logits = Matrix(labels.size(), classes);
  dump.logits.data = std::move(values);
  dump.labels = std::move(labels);
  return dump;
}

void write_dataset_json(const std::filesystem::path& path, const Dataset& dataset) {
  dataset.validate();
  json rows = json::array();
  for (const auto& ex : dataset.examples) {
    json row = json::array();
    for (double f : ex.features) row.push_back(f);
    row.push_back(ex.label);
    rows.push_back(std::move(row));
  }
  json doc{{"schema", "calib.dataset/1"},
           {"name", dataset.name},
           {"num_classes", dataset.num_classes},
           {"feature_dim", dataset.feature_dim()},
           {"rows", std::move(rows)}};
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string(), 0);
  out << doc.dump(2) << "\n";
}

Dataset read_dataset_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError("json: " + std::string(e.what()) + " in " + path.string(), 0);
  }
  Dataset d;
  try {
    if (doc.at("schema").get<std::string>() != "calib.dataset/1")
      throw ParseError("json: unknown dataset schema in " + path.string(), 0);
    d.name = doc.at("name").get<std::string>();
    d.num_classes = doc.at("num_classes").get<int>();
    const auto dim = doc.at("feature_dim").get<std::size_t>();
    for (const auto& row : doc.at("rows")) {
      if (row.size() != dim + 1) throw ParseError("json: row length mismatch", 0);
      LabeledExample ex;
      ex.features.reserve(dim);
      for (std::size_t f = 0; f < dim; ++f) ex.features.push_back(row[f].get<double>());
      ex.label = row[dim].get<int>();
      d.examples.push_back(std::move(ex));
    }
  } catch (const json::exception& e) {
    throw ParseError("json: " + std::string(e.what()) + " in " + path.string(), 0);
  }
  d.validate();
  return d;
}

}  // namespace calib
