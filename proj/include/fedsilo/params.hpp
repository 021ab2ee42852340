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
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fedsilo {

struct TensorEntry {
  std::string name;
  std::vector<std::uint32_t> shape;

  std::size_t size() const;
  bool operator==(const TensorEntry&) const = default;
};

// Ordered named-tensor layout of a flat parameter array. Immutable after
// construction; shared between the vectors that use it.
class ModelLayout {
 public:
  ModelLayout() = default;
  explicit ModelLayout(std::vector<TensorEntry> entries);

  const std::vector<TensorEntry>& entries() const { return entries_; }
  std::size_t total_len() const { return total_len_; }

  // Offset of the named tensor inside the flat array; throws
  // InvalidArgument when absent.
  std::size_t offset_of(const std::string& name) const;

  bool operator==(const ModelLayout& other) const {
    return entries_ == other.entries_;
  }

 private:
  std::vector<TensorEntry> entries_;
  std::size_t total_len_ = 0;
};

using LayoutPtr = std::shared_ptr<const ModelLayout>;

// Flat float64 model parameters plus their layout. Every element is finite;
// construction rejects NaN/Inf with ErrorCode::kNonFinite.
class ParameterVector {
 public:
  ParameterVector() : layout_(std::make_shared<ModelLayout>()) {}
  ParameterVector(LayoutPtr layout, std::vector<double> values);

  static ParameterVector zeros(LayoutPtr layout);
  static ParameterVector filled(LayoutPtr layout, double value);

  const ModelLayout& layout() const { return *layout_; }
  const LayoutPtr& layout_ptr() const { return layout_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  bool same_layout(const ParameterVector& other) const {
    return layout_ == other.layout_ || *layout_ == *other.layout_;
  }

  // Bit-level equality of layout and values.
  bool bit_equal(const ParameterVector& other) const;

 private:
  LayoutPtr layout_;
  std::vector<double> values_;
};

// Convenience for single-tensor vectors used in tests and tools.
ParameterVector make_vector(std::vector<double> values,
                            const std::string& name = "w");

// result[i] = sum_k weights[k] * vectors[k][i] / sum_k weights[k]
ParameterVector weighted_mean(std::span<const ParameterVector> vectors,
                              std::span<const double> weights);

double l2_norm(const ParameterVector& v);

// result[i] = alpha * x[i] + y[i]
ParameterVector axpy(double alpha, const ParameterVector& x,
                     const ParameterVector& y);

// x - y, element-wise.
ParameterVector subtract(const ParameterVector& x, const ParameterVector& y);

ParameterVector scale(double alpha, const ParameterVector& x);

// Binary blob format (all integers little-endian):
//   "FSPV" | u16 version | u32 entry count |
//   per entry: u32 name length, UTF-8 name, u32 rank, u32 dims[rank] |
//   f64 values[total_len]
// The payload length is implied by the layout; trailing or missing bytes are
// rejected with ErrorCode::kMalformedBlob.
std::vector<std::uint8_t> serialize(const ParameterVector& v);
ParameterVector deserialize(std::span<const std::uint8_t> bytes);

}  // namespace fedsilo
