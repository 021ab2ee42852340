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

#include "fedsilo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "fedsilo/error.hpp"
#include "fedsilo/fs_util.hpp"

namespace fedsilo {
namespace {

constexpr std::uint32_t kIdxImagesMagic = 2051;
constexpr std::uint32_t kIdxLabelsMagic = 2049;

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

[[noreturn]] void parse_error(const std::filesystem::path& path, std::size_t offset,
                              const std::string& reason) {
  throw Error(ErrorCode::kParseError,
              path.string() + " at offset " + std::to_string(offset) + ": " + reason);
}

std::vector<std::uint8_t> read_or_parse_error(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) parse_error(path, 0, "file does not exist");
  return read_binary_file(path);
}

double normalize(double v, Normalization n) {
  return n == Normalization::kScale01 ? v / 255.0 : v;
}

LocalDataset load_idx(const DataLoaderSpec& spec) {
  const auto images = read_idx_images(spec.train_images);
  const auto labels = read_idx_labels(spec.train_labels);
  if (labels.size() != images.count) {
    parse_error(spec.train_labels, 4,
                "label count " + std::to_string(labels.size()) +
                    " does not match image count " + std::to_string(images.count));
  }
  LocalDataset d;
  d.num_features = std::size_t{images.rows} * images.cols;
  d.feature_shape = {1, images.rows, images.cols};
  d.features.resize(images.pixels.size());
  for (std::size_t i = 0; i < images.pixels.size(); ++i) {
    d.features[i] = normalize(images.pixels[i], spec.normalization);
  }
  d.labels.assign(labels.begin(), labels.end());
  return d;
}

LocalDataset load_csv(const DataLoaderSpec& spec) {
  if (!std::filesystem::exists(spec.train_csv)) {
    parse_error(spec.train_csv, 0, "file does not exist");
  }
  std::ifstream in(spec.train_csv);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) parse_error(spec.train_csv, 0, "missing header row");

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) {
    parse_error(spec.train_csv, 0, "header has no 'label' column");
  }
  const std::size_t label_col = label_it - header.begin();

  LocalDataset d;
  d.num_features = header.size() - 1;
  d.feature_shape = {static_cast<std::uint32_t>(d.num_features)};
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) {
          ++used;
        }
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        parse_error(spec.train_csv, line_no,
                    "line " + std::to_string(line_no) + " column " +
                        std::to_string(col + 1) + ": not a number '" + cell + "'");
      }
      if (col == label_col) {
        if (v != std::floor(v)) {
          parse_error(spec.train_csv, line_no, "non-integer label on line " +
                                                   std::to_string(line_no));
        }
        d.labels.push_back(static_cast<int>(v));
      } else {
        d.features.push_back(normalize(v, spec.normalization));
      }
      ++col;
    }
    if (col != header.size()) {
      parse_error(spec.train_csv, line_no,
                  "line " + std::to_string(line_no) + " has " + std::to_string(col) +
                      " columns, header has " + std::to_string(header.size()));
    }
  }
  return d;
}

}  // namespace

void DataLoaderSpec::validate() const {
  std::map<std::string, std::string> bad;
  if (!(val_fraction >= 0.0 && val_fraction <= 0.5)) {
    bad["val_fraction"] = "must be in [0, 0.5]";
  }
  if (num_classes < 1) bad["num_classes"] = "must be >= 1";
  if (format == DataFormat::kMnistIdx && (train_images.empty() || train_labels.empty())) {
    bad["train_images"] = "mnist_idx needs train_images and train_labels";
  }
  if (format == DataFormat::kCsv && train_csv.empty()) {
    bad["train_csv"] = "csv format needs train_csv";
  }
  if (!bad.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "invalid data loader spec", std::move(bad));
  }
}

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto b = read_or_parse_error(path);
  if (b.size() < 16) parse_error(path, b.size(), "truncated IDX header");
  if (read_be32(b, 0) != kIdxImagesMagic) {
    parse_error(path, 0, "bad magic " + std::to_string(read_be32(b, 0)) +
                             " (expected 2051)");
  }
  IdxImages img;
  img.count = read_be32(b, 4);
  img.rows = read_be32(b, 8);
  img.cols = read_be32(b, 12);
  const std::size_t expected =
      16 + std::size_t{img.count} * img.rows * img.cols;
  if (b.size() != expected) {
    parse_error(path, std::min(b.size(), expected),
                "payload size " + std::to_string(b.size()) + " != expected " +
                    std::to_string(expected));
  }
  img.pixels.assign(b.begin() + 16, b.end());
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto b = read_or_parse_error(path);
  if (b.size() < 8) parse_error(path, b.size(), "truncated IDX header");
  if (read_be32(b, 0) != kIdxLabelsMagic) {
    parse_error(path, 0, "bad magic " + std::to_string(read_be32(b, 0)) +
                             " (expected 2049)");
  }
  const std::size_t count = read_be32(b, 4);
  if (b.size() != 8 + count) {
    parse_error(path, std::min(b.size(), 8 + count), "label payload size mismatch");
  }
  return {b.begin() + 8, b.end()};
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  std::string out;
  put_be32(out, kIdxImagesMagic);
  put_be32(out, images.count);
  put_be32(out, images.rows);
  put_be32(out, images.cols);
  out.append(images.pixels.begin(), images.pixels.end());
  write_file_atomic(path, out);
}

void write_idx_labels(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& labels) {
  std::string out;
  put_be32(out, kIdxLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.append(labels.begin(), labels.end());
  write_file_atomic(path, out);
}

LocalDataset load_dataset(const DataLoaderSpec& spec) {
  spec.validate();
  LocalDataset d = spec.format == DataFormat::kMnistIdx ? load_idx(spec) : load_csv(spec);
  d.num_classes = spec.num_classes;
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    if (d.labels[i] < 0 || d.labels[i] >= spec.num_classes) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "label " + std::to_string(d.labels[i]) + " at row " +
                      std::to_string(i) + " outside [0, " +
                      std::to_string(spec.num_classes) + ")");
    }
  }
  split_dataset(d, spec.val_fraction, spec.shuffle_seed);
  return d;
}

void split_dataset(LocalDataset& data, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> perm(data.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_val = static_cast<std::size_t>(
      std::floor(val_fraction * static_cast<double>(data.size())));
  data.val_idx.assign(perm.begin(), perm.begin() + n_val);
  data.train_idx.assign(perm.begin() + n_val, perm.end());
}

std::vector<std::int64_t> label_histogram(const LocalDataset& data) {
  std::vector<std::int64_t> hist(std::max(data.num_classes, 1), 0);
  for (auto i : data.train_idx) {
    const int label = data.labels[i];
    if (label >= 0 && label < static_cast<int>(hist.size())) ++hist[label];
  }
  return hist;
}

SyntheticImages make_synthetic_images(std::size_t count, std::uint64_t seed,
                                      double noise) {
  constexpr int kSide = 28;
  constexpr int kClasses = 10;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Each prototype is a sum of a few anisotropic strokes.
  std::vector<std::vector<double>> protos(kClasses, std::vector<double>(kSide * kSide));
  for (auto& p : protos) {
    const int strokes = 3 + static_cast<int>(unit(rng) * 3);
    for (int s = 0; s < strokes; ++s) {
      const double cx = 7 + unit(rng) * 14, cy = 7 + unit(rng) * 14;
      const double angle = unit(rng) * 3.14159265358979;
      const double len = 3 + unit(rng) * 5, width = 1.2 + unit(rng);
      for (int y = 0; y < kSide; ++y) {
        for (int x = 0; x < kSide; ++x) {
          const double dx = x - cx, dy = y - cy;
          const double u = dx * std::cos(angle) + dy * std::sin(angle);
          const double v = -dx * std::sin(angle) + dy * std::cos(angle);
          p[y * kSide + x] += std::exp(-0.5 * (u * u / (len * len) + v * v / (width * width)));
        }
      }
    }
    const double mx = *std::max_element(p.begin(), p.end());
    for (auto& v : p) v /= mx;
  }

  SyntheticImages out;
  out.images.count = static_cast<std::uint32_t>(count);
  out.images.rows = kSide;
  out.images.cols = kSide;
  out.images.pixels.resize(count * kSide * kSide);
  out.labels.resize(count);
  for (std::size_t n = 0; n < count; ++n) {
    const int label = static_cast<int>(unit(rng) * kClasses) % kClasses;
    const int other = (label + 1 + static_cast<int>(unit(rng) * (kClasses - 1))) % kClasses;
    const double mix = 0.45 * unit(rng);
    const int sx = static_cast<int>(unit(rng) * 5) - 2;
    const int sy = static_cast<int>(unit(rng) * 5) - 2;
    const double gain = 0.6 + 0.6 * unit(rng);
    out.labels[n] = static_cast<std::uint8_t>(label);
    for (int y = 0; y < kSide; ++y) {
      for (int x = 0; x < kSide; ++x) {
        const int px = x - sx, py = y - sy;
        double v = 0.0;
        if (px >= 0 && px < kSide && py >= 0 && py < kSide) {
          v = (1.0 - mix) * protos[label][py * kSide + px] +
              mix * protos[other][py * kSide + px];
        }
        v = gain * v + noise * gauss(rng);
        out.images.pixels[n * kSide * kSide + y * kSide + x] =
            static_cast<std::uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
      }
    }
  }
  return out;
}

std::vector<std::filesystem::path> partition_idx(const IdxImages& images,
                                                 const std::vector<std::uint8_t>& labels,
                                                 std::size_t parts,
                                                 const std::filesystem::path& out_dir) {
  if (parts == 0 || labels.size() != images.count) {
    throw Error(ErrorCode::kInvalidArgument, "bad partition request");
  }
  const std::size_t per = images.count / parts;
  const std::size_t pixels = std::size_t{images.rows} * images.cols;
  std::vector<std::filesystem::path> written;
  for (std::size_t p = 0; p < parts; ++p) {
    IdxImages shard{static_cast<std::uint32_t>(per), images.rows, images.cols, {}};
    shard.pixels.assign(images.pixels.begin() + p * per * pixels,
                        images.pixels.begin() + (p + 1) * per * pixels);
    std::vector<std::uint8_t> shard_labels(labels.begin() + p * per,
                                           labels.begin() + (p + 1) * per);
    const auto base = out_dir / ("client" + std::to_string(p + 1));
    write_idx_images(base.string() + "-images.idx", shard);
    write_idx_labels(base.string() + "-labels.idx", shard_labels);
    written.push_back(base);
  }
  return written;
}

}  // namespace fedsilo
