// Copyright 2026 The fedsilo Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "fedsilo/dataset.hpp"
#include "fedsilo/error.hpp"
#include "fedsilo/trainer.hpp"

namespace fedsilo {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("fedsilo-test-" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

LocalDataset two_blobs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  LocalDataset d;
  d.num_features = 2;
  d.feature_shape = {2};
  d.num_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    const double c = y == 0 ? -1.5 : 1.5;
    d.features.push_back(c + g(rng));
    d.features.push_back(c + g(rng));
    d.labels.push_back(y);
    d.train_idx.push_back(i);
  }
  return d;
}

ModelSpec logistic(std::uint32_t features, std::uint32_t classes) {
  ModelSpec s;
  s.kind = ModelKind::kLogisticRegression;
  s.input_shape = {features};
  s.num_classes = classes;
  return s;
}

TEST(Idx, RoundTripAndLoad) {
  TempDir dir;
  auto synth = make_synthetic_images(50, 4);
  write_idx_images(dir.path() / "i.idx", synth.images);
  write_idx_labels(dir.path() / "l.idx", synth.labels);
  EXPECT_EQ(fs::file_size(dir.path() / "i.idx"), 16u + 50u * 28 * 28);
  EXPECT_EQ(fs::file_size(dir.path() / "l.idx"), 8u + 50u);

  DataLoaderSpec spec;
  spec.train_images = dir.path() / "i.idx";
  spec.train_labels = dir.path() / "l.idx";
  const auto d = load_dataset(spec);
  ASSERT_EQ(d.size(), 50u);
  EXPECT_EQ(d.num_features, 784u);
  EXPECT_EQ(d.features.size(), 50u * 784);
  for (double x : d.features) {
    ASSERT_GE(x, 0.0);
    ASSERT_LE(x, 1.0);
  }
  EXPECT_EQ(d.features[100], synth.images.pixels[100] / 255.0);
  EXPECT_EQ(d.val_idx.size(), 5u);
  EXPECT_EQ(d.train_idx.size(), 45u);
}

TEST(Idx, ParseErrorsCarryOffset) {
  TempDir dir;
  write_text(dir.path() / "bad.idx", std::string("\x00\x00\x08\x01garbage!", 12));
  DataLoaderSpec spec;
  spec.train_images = dir.path() / "bad.idx";
  spec.train_labels = dir.path() / "bad.idx";
  try {
    load_dataset(spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
}

TEST(Csv, LoadsAndRejectsBadLabels) {
  TempDir dir;
  write_text(dir.path() / "ok.csv", "a,b,label\n1,2,0\n3,4,1\n5,6,2\n");
  DataLoaderSpec spec;
  spec.format = DataFormat::kCsv;
  spec.normalization = Normalization::kNone;
  spec.num_classes = 3;
  spec.val_fraction = 0.0;
  spec.train_csv = dir.path() / "ok.csv";
  const auto d = load_dataset(spec);
  EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(d.features, (std::vector<double>{1, 2, 3, 4, 5, 6}));

  write_text(dir.path() / "out.csv", "a,label\n1,0\n2,7\n");
  spec.train_csv = dir.path() / "out.csv";
  try {
    load_dataset(spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLabelOutOfRange);
  }

  write_text(dir.path() / "nan.csv", "a,label\n1,0\nxyz,1\n");
  spec.train_csv = dir.path() / "nan.csv";
  try {
    load_dataset(spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
  }
}

TEST(Split, DeterministicAndDisjoint) {
  TempDir dir;
  auto synth = make_synthetic_images(200, 9);
  write_idx_images(dir.path() / "i.idx", synth.images);
  write_idx_labels(dir.path() / "l.idx", synth.labels);
  DataLoaderSpec spec;
  spec.train_images = dir.path() / "i.idx";
  spec.train_labels = dir.path() / "l.idx";
  spec.shuffle_seed = 77;
  const auto a = load_dataset(spec);
  const auto b = load_dataset(spec);
  EXPECT_EQ(a.train_idx, b.train_idx);
  EXPECT_EQ(a.val_idx, b.val_idx);
  EXPECT_EQ(a.val_idx.size(), 20u);
  std::vector<std::size_t> all(a.train_idx);
  all.insert(all.end(), a.val_idx.begin(), a.val_idx.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(200);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(all, expect);
}

TEST(Histogram, CountsTrainSplit) {
  LocalDataset empty;
  empty.num_classes = 10;
  EXPECT_EQ(label_histogram(empty), std::vector<std::int64_t>(10, 0));

  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    auto d = two_blobs(1 + rng() % 100, rng());
    split_dataset(d, 0.2, rng());
    const auto h = label_histogram(d);
    EXPECT_EQ(std::accumulate(h.begin(), h.end(), std::int64_t{0}),
              static_cast<std::int64_t>(d.train_idx.size()));
  }
}

TEST(Partition, EqualShards) {
  TempDir dir;
  auto synth = make_synthetic_images(100, 1);
  const auto files = partition_idx(synth.images, synth.labels, 5, dir.path());
  ASSERT_EQ(files.size(), 5u);
  for (const auto& base : files) {
    EXPECT_EQ(read_idx_labels(base.string() + "-labels.idx").size(), 20u);
    EXPECT_EQ(read_idx_images(base.string() + "-images.idx").count, 20u);
  }
  EXPECT_TRUE(fs::exists(dir.path() / "client1-images.idx"));
}

TEST(LocalTrain, ZeroLearningRateKeepsWeights) {
  const auto data = two_blobs(40, 1);
  const auto spec = logistic(2, 2);
  const auto model = init_model(spec);
  TrainOptions opt;
  opt.lr = 0.0;
  opt.batch_size = 8;
  const auto out = local_train(model, spec, data, opt);
  EXPECT_TRUE(out.weights.bit_equal(model));
  EXPECT_GT(out.metrics.loss, 0.0);
  EXPECT_EQ(out.metrics.num_samples, 40);

  opt.epochs = 0;
  EXPECT_THROW(local_train(model, spec, data, opt), Error);
}

TEST(LocalTrain, SeparableToySet) {
  const auto data = two_blobs(200, 2);
  const auto spec = logistic(2, 2);
  TrainOptions opt;
  opt.epochs = 50;
  opt.batch_size = 16;
  opt.lr = 0.1;
  opt.seed = 3;
  const auto out = local_train(init_model(spec), spec, data, opt);
  EXPECT_GE(out.metrics.accuracy, 0.99);
  EXPECT_GE(evaluate(out.weights, spec, data, Split::kTrain).accuracy, 0.99);
}

TEST(LocalTrain, DeterministicForSeed) {
  auto data = two_blobs(100, 3);
  ModelSpec spec;
  spec.input_shape = {2};
  spec.num_classes = 2;
  spec.hidden_sizes = {6};
  TrainOptions opt;
  opt.epochs = 3;
  opt.batch_size = 7;
  opt.lr = 0.05;
  opt.seed = 11;
  const auto a = local_train(init_model(spec), spec, data, opt);
  const auto b = local_train(init_model(spec), spec, data, opt);
  EXPECT_TRUE(a.weights.bit_equal(b.weights));
  EXPECT_EQ(a.metrics.loss, b.metrics.loss);
  opt.seed = 12;
  EXPECT_FALSE(local_train(init_model(spec), spec, data, opt).weights.bit_equal(a.weights));
}

TEST(LocalTrain, DivergenceIsNonFiniteLoss) {
  auto data = two_blobs(50, 4);
  for (auto& x : data.features) x *= 1e6;
  auto spec = logistic(2, 2);
  TrainOptions opt;
  opt.lr = 1e6;
  opt.epochs = 20;
  opt.loss = LossKind::kMse;
  try {
    local_train(init_model(spec), spec, data, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteLoss);
  }
}

TEST(Evaluate, UniformPredictorNearChance) {
  TempDir dir;
  auto synth = make_synthetic_images(1000, 21);
  write_idx_images(dir.path() / "i.idx", synth.images);
  write_idx_labels(dir.path() / "l.idx", synth.labels);
  DataLoaderSpec ds;
  ds.train_images = dir.path() / "i.idx";
  ds.train_labels = dir.path() / "l.idx";
  ds.val_fraction = 0.0;
  const auto data = load_dataset(ds);
  ModelSpec spec = logistic(784, 10);
  const auto zero = ParameterVector::zeros(model_layout(spec));
  const auto m = evaluate(zero, spec, data, Split::kTrain);
  EXPECT_NEAR(m.accuracy, 0.1, 0.03);
  EXPECT_NEAR(m.loss, std::log(10.0), 1e-9);
  EXPECT_EQ(m.num_samples, 1000);
  EXPECT_THROW(evaluate(zero, spec, data, Split::kVal), Error);
  try {
    evaluate(zero, spec, data, Split::kVal);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptySplit);
  }
}

TEST(Evaluate, MemorizationModelIsPerfect) {
  // One-hot inputs with an identity weight matrix recover every label.
  LocalDataset d;
  d.num_features = 4;
  d.feature_shape = {4};
  d.num_classes = 4;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) d.features.push_back(i == j ? 1.0 : 0.0);
    d.labels.push_back(i);
    d.train_idx.push_back(i);
  }
  auto spec = logistic(4, 4);
  std::vector<double> w(20, 0.0);
  for (int i = 0; i < 4; ++i) w[i * 4 + i] = 10.0;
  const ParameterVector model(model_layout(spec), w);
  EXPECT_EQ(evaluate(model, spec, d, Split::kTrain).accuracy, 1.0);
}

}  // namespace
}  // namespace fedsilo
