#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>

#include "calib/data.hpp"
#include "calib/errors.hpp"
#include "calib/rng.hpp"

using namespace calib;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("calib_test_" + name);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("softmax basics") {
  auto p = softmax(std::vector<double>{0.0, 0.0, 0.0});
  CHECK(p.entries()[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(p.entries()[2] == doctest::Approx(1.0 / 3).epsilon(1e-12));

  auto q = softmax(std::vector<double>{std::log(2.0), 0.0, 0.0});
  CHECK(q.entries()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(q.entries()[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(q.entries()[2] == doctest::Approx(0.25).epsilon(1e-12));

  auto r = softmax(std::vector<double>{1000.0, 0.0, 0.0});
  CHECK(r.entries()[0] == doctest::Approx(1.0));
  CHECK(r.entries()[1] >= 0.0);

  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::nan("")}), InvalidInputError);
}

TEST_CASE("softmax stays a probability vector at extreme logits") {
  SplitMix64 rng(7);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> logits(4);
    for (double& v : logits) v = (rng.next_double() * 2 - 1) * 1e6;
    auto p = softmax(logits);  // constructor enforces the invariants
    double sum = 0.0;
    for (double v : p.entries()) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("to_prediction_batch readout, tie rule, errors") {
  std::vector<ProbVector> probs;
  probs.emplace_back(std::vector<double>{0.7, 0.2, 0.1});
  std::vector<int> labels{0};
  auto batch = to_prediction_batch(probs, labels);
  CHECK(batch.confidence[0] == doctest::Approx(0.7));
  CHECK(batch.correct[0] == 1);

  std::vector<ProbVector> tie;
  tie.emplace_back(std::vector<double>{0.5, 0.5});
  std::vector<int> tie_labels{1};
  auto tie_batch = to_prediction_batch(tie, tie_labels);
  CHECK(tie_batch.confidence[0] == doctest::Approx(0.5));
  CHECK(tie_batch.correct[0] == 0);  // lowest index wins the tie

  std::vector<ProbVector> two;
  two.emplace_back(std::vector<double>{0.4, 0.6});
  two.emplace_back(std::vector<double>{0.9, 0.1});
  std::vector<int> two_labels{0, 0};
  auto two_batch = to_prediction_batch(two, two_labels);
  CHECK(two_batch.confidence[0] == doctest::Approx(0.6));
  CHECK(two_batch.correct[0] == 0);
  CHECK(two_batch.confidence[1] == doctest::Approx(0.9));
  CHECK(two_batch.correct[1] == 1);

  std::vector<int> wrong{0, 1, 2};
  CHECK_THROWS_AS(to_prediction_batch(two, wrong), InvalidInputError);
}

TEST_CASE("prediction confidence is at least 1/C") {
  SplitMix64 rng(13);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> logits(5);
    for (double& v : logits) v = rng.next_gaussian();
    auto p = softmax(logits);
    CHECK(p.max_entry() >= 1.0 / 5 - 1e-12);
  }
}

TEST_CASE("split_dataset sizes and determinism") {
  Dataset d;
  d.name = "unit";
  d.num_classes = 2;
  for (int i = 0; i < 100; ++i) d.examples.push_back({{double(i), 0.0}, i % 2});

  SplitSpec spec;
  spec.seed = 42;
  auto s = split_dataset(d, spec);
  CHECK(s.train_core.size() == 72);
  CHECK(s.cal.size() == 8);
  CHECK(s.val.size() == 10);
  CHECK(s.test.size() == 10);

  auto s2 = split_dataset(d, spec);
  for (std::size_t i = 0; i < s.train_core.size(); ++i)
    CHECK(s.train_core.examples[i].features[0] == s2.train_core.examples[i].features[0]);

  // union = original multiset, parts disjoint
  std::multiset<double> seen;
  for (const auto* part : {&s.train_core, &s.cal, &s.val, &s.test})
    for (const auto& ex : part->examples) seen.insert(ex.features[0]);
  CHECK(seen.size() == 100);
  std::multiset<double> expected;
  for (const auto& ex : d.examples) expected.insert(ex.features[0]);
  CHECK(seen == expected);
}

TEST_CASE("split_dataset interleave arithmetic on a 10-example train portion") {
  Dataset d;
  d.name = "unit";
  d.num_classes = 2;
  for (int i = 0; i < 12; ++i) d.examples.push_back({{double(i)}, i % 2});
  SplitSpec spec;
  spec.interleave_frac = 0.5;
  auto s = split_dataset(d, spec);  // train portion is round(0.8*12) = 10
  CHECK(s.train_core.size() == 5);
  CHECK(s.cal.size() == 5);
}

TEST_CASE("split_dataset rejects empty splits") {
  Dataset d;
  d.name = "tiny";
  d.num_classes = 2;
  for (int i = 0; i < 4; ++i) d.examples.push_back({{double(i)}, i % 2});
  SplitSpec spec;  // 80/10/10 of 4 leaves val/test empty
  CHECK_THROWS_AS(split_dataset(d, spec), ConfigError);
}

TEST_CASE("idx round trip") {
  // Two 28x28 images plus labels, built byte by byte.
  auto images_path = temp_file("images.idx");
  auto labels_path = temp_file("labels.idx");
  {
    std::ofstream out(images_path, std::ios::binary);
    auto be32 = [&](std::uint32_t v) {
      char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
      out.write(b, 4);
    };
    be32(0x00000803u);
    be32(2);
    be32(28);
    be32(28);
    for (int i = 0; i < 2 * 28 * 28; ++i) {
      char px = char(i % 256);
      out.write(&px, 1);
    }
  }
  {
    std::ofstream out(labels_path, std::ios::binary);
    auto be32 = [&](std::uint32_t v) {
      char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
      out.write(b, 4);
    };
    be32(0x00000801u);
    be32(2);
    char l0 = 3, l1 = 7;
    out.write(&l0, 1);
    out.write(&l1, 1);
  }

  auto images = read_idx_images(images_path);
  REQUIRE(images.size() == 2);
  CHECK(images[0].size() == 784);
  CHECK(images[0][255] == doctest::Approx(1.0));

  Dataset d = read_idx(images_path, labels_path, "mini");
  CHECK(d.size() == 2);
  CHECK(d.num_classes == 8);
  CHECK(d.examples[1].label == 7);

  CHECK_THROWS_AS(read_idx_images(labels_path), ParseError);  // wrong magic
}

TEST_CASE("prediction csv parse, validation, and exact round trip") {
  auto path = temp_file("preds.csv");
  {
    std::ofstream out(path);
    out << "confidence,correct\n0.9,1\n0.5,0\n";
  }
  auto batch = read_csv_predictions(path);
  REQUIRE(batch.size() == 2);
  CHECK(batch.confidence[0] == 0.9);
  CHECK(batch.correct[1] == 0);

  {
    std::ofstream out(path);
    out << "confidence,correct\n1.2,1\n";
  }
  CHECK_THROWS_AS(read_csv_predictions(path), ParseError);

  SplitMix64 rng(3);
  PredictionBatch random;
  for (int i = 0; i < 64; ++i) {
    random.confidence.push_back(rng.next_double());
    random.correct.push_back(rng.next_double() < 0.5 ? 1 : 0);
  }
  auto rt = temp_file("roundtrip.csv");
  write_csv_predictions(rt, random);
  auto back = read_csv_predictions(rt);
  REQUIRE(back.size() == random.size());
  for (std::size_t i = 0; i < random.size(); ++i) {
    CHECK(back.confidence[i] == random.confidence[i]);  // bit-exact
    CHECK(back.correct[i] == random.correct[i]);
  }
}

TEST_CASE("logit csv round trip") {
  Matrix logits(3, 2);
  logits.data = {1.5, -0.25, 0.0, 2.0, -3.5, 0.125};
  std::vector<int> labels{0, 1, 1};
  auto path = temp_file("logits.csv");
  write_csv_logits(path, logits, labels);
  auto dump = read_csv_logits(path);
  CHECK(dump.logits.rows == 3);
  CHECK(dump.logits.cols == 2);
  for (std::size_t i = 0; i < logits.data.size(); ++i)
    CHECK(dump.logits.data[i] == logits.data[i]);
  CHECK(dump.labels == labels);
}

TEST_CASE("dataset json round trip and seed determinism") {
  SyntheticTaskSpec spec;
  spec.classes = 3;
  spec.per_class = 40;
  spec.label_noise = 0.1;
  spec.seed = 77;
  Dataset d = generate_synthetic(spec);
  auto p1 = temp_file("ds1.json");
  auto p2 = temp_file("ds2.json");
  write_dataset_json(p1, d);
  write_dataset_json(p2, generate_synthetic(spec));
  CHECK(slurp(p1) == slurp(p2));  // byte-identical for the same seed

  Dataset back = read_dataset_json(p1);
  REQUIRE(back.size() == d.size());
  CHECK(back.num_classes == d.num_classes);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.examples[i].label == d.examples[i].label);
    for (std::size_t f = 0; f < d.examples[i].features.size(); ++f)
      CHECK(back.examples[i].features[f] == d.examples[i].features[f]);
  }
}

TEST_CASE("synthetic generator counting and noise rate") {
  SyntheticTaskSpec spec;
  spec.classes = 3;
  spec.per_class = 100;
  spec.label_noise = 0.0;
  Dataset d = generate_synthetic(spec);
  CHECK(d.size() == 300);
  CHECK(d.num_classes == 3);

  // With noise p, labels disagree with their blob at rate p*(C-1)/C.
  spec.label_noise = 0.2;
  spec.per_class = 500;
  double mismatch = 0.0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    spec.seed = 1000 + t;
    Dataset noisy = generate_synthetic(spec);
    int wrong = 0;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      int blob = static_cast<int>(i) / spec.per_class;
      if (noisy.examples[i].label != blob) ++wrong;
    }
    mismatch += double(wrong) / double(noisy.size()) / trials;
  }
  CHECK(mismatch == doctest::Approx(0.2 * 2.0 / 3.0).epsilon(0.08));
}

TEST_CASE("synthetic separation zero is unlearnable") {
  SyntheticTaskSpec spec;
  spec.classes = 3;
  spec.per_class = 1000;
  spec.separation = 0.0;
  spec.seed = 5;
  Dataset d = generate_synthetic(spec);
  // Nearest-centroid classifier fit on one half, scored on the other.
  std::vector<std::vector<double>> centroid(3, std::vector<double>(2, 0.0));
  std::vector<int> count(3, 0);
  for (std::size_t i = 0; i < d.size() / 2; ++i) {
    const auto& ex = d.examples[i];
    for (int f = 0; f < 2; ++f) centroid[ex.label][f] += ex.features[f];
    ++count[ex.label];
  }
  for (int c = 0; c < 3; ++c)
    for (int f = 0; f < 2; ++f) centroid[c][f] /= std::max(1, count[c]);
  int hits = 0, total = 0;
  for (std::size_t i = d.size() / 2; i < d.size(); ++i) {
    const auto& ex = d.examples[i];
    int best = 0;
    double best_dist = 1e18;
    for (int c = 0; c < 3; ++c) {
      double dist = 0.0;
      for (int f = 0; f < 2; ++f) {
        double g = ex.features[f] - centroid[c][f];
        dist += g * g;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    hits += best == ex.label;
    ++total;
  }
  CHECK(double(hits) / total == doctest::Approx(1.0 / 3).epsilon(0.15));
}

TEST_CASE("csv examples round trip") {
  SyntheticTaskSpec spec;
  spec.classes = 2;
  spec.per_class = 25;
  Dataset d = generate_synthetic(spec);
  auto path = temp_file("examples.csv");
  write_csv_examples(path, d);
  Dataset back = read_csv_examples(path);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.examples[i].label == d.examples[i].label);
    CHECK(back.examples[i].features[0] == d.examples[i].features[0]);
  }
}

TEST_CASE("derive_seed gives distinct streams") {
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(derive_seed(12345, i));
  CHECK(seen.size() == 1000);
}
