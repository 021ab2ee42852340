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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fedsilo {

enum class DataFormat { kMnistIdx, kCsv };
enum class Normalization { kNone, kScale01 };

struct DataLoaderSpec {
  DataFormat format = DataFormat::kMnistIdx;
  std::filesystem::path train_images;  // mnist_idx
  std::filesystem::path train_labels;  // mnist_idx
  std::filesystem::path train_csv;     // csv
  double val_fraction = 0.1;
  std::uint64_t shuffle_seed = 0;
  Normalization normalization = Normalization::kScale01;
  int num_classes = 10;

  void validate() const;
};

// Row-major dense features with integer labels and a deterministic
// train/validation split (index lists into the rows).
struct LocalDataset {
  std::vector<double> features;
  std::size_t num_features = 0;
  std::vector<std::uint32_t> feature_shape;
  std::vector<int> labels;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  int num_classes = 10;

  std::size_t size() const { return labels.size(); }
  const double* row(std::size_t i) const { return features.data() + i * num_features; }
};

LocalDataset load_dataset(const DataLoaderSpec& spec);

// Splits rows into train/validation with a seeded permutation.
void split_dataset(LocalDataset& data, double val_fraction, std::uint64_t seed);

// Counts per label over the train split; size num_classes.
std::vector<std::int64_t> label_histogram(const LocalDataset& data);

struct IdxImages {
  std::uint32_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& labels);

// Deterministic 10-class 28x28 digit-like images: each class has a smooth
// random prototype; samples are shifted, scaled and noisy copies.
struct SyntheticImages {
  IdxImages images;
  std::vector<std::uint8_t> labels;
};
SyntheticImages make_synthetic_images(std::size_t count, std::uint64_t seed,
                                      double noise = 0.35);

// Splits an IDX pair into `parts` equally sized contiguous shards named
// client<i>-images.idx / client<i>-labels.idx under out_dir. Trailing rows
// that do not divide evenly are dropped.
std::vector<std::filesystem::path> partition_idx(const IdxImages& images,
                                                 const std::vector<std::uint8_t>& labels,
                                                 std::size_t parts,
                                                 const std::filesystem::path& out_dir);

}  // namespace fedsilo
