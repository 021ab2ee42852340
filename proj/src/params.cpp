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

#include "fedsilo/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "fedsilo/error.hpp"

namespace fedsilo {
namespace {

constexpr char kMagic[4] = {'F', 'S', 'P', 'V'};
constexpr std::uint16_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "blob encoding assumes a little-endian host");

void require_same_layout(const ParameterVector& a, const ParameterVector& b) {
  if (!a.same_layout(b)) {
    throw Error(ErrorCode::kLayoutMismatch, "parameter layouts differ");
  }
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::uint8_t* cursor() const { return bytes_.data() + pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw Error(ErrorCode::kMalformedBlob, "truncated parameter blob");
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t TensorEntry::size() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

ModelLayout::ModelLayout(std::vector<TensorEntry> entries)
    : entries_(std::move(entries)) {
  std::unordered_set<std::string> names;
  for (const auto& e : entries_) {
    if (e.name.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "tensor name must be non-empty");
    }
    if (!names.insert(e.name).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate tensor name '" + e.name + "'");
    }
    if (e.shape.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "tensor '" + e.name + "' has rank 0");
    }
    for (auto d : e.shape) {
      if (d == 0) {
        throw Error(ErrorCode::kInvalidArgument,
                    "tensor '" + e.name + "' has a zero dimension");
      }
    }
    total_len_ += e.size();
  }
}

std::size_t ModelLayout::offset_of(const std::string& name) const {
  std::size_t offset = 0;
  for (const auto& e : entries_) {
    if (e.name == name) return offset;
    offset += e.size();
  }
  throw Error(ErrorCode::kInvalidArgument, "no tensor named '" + name + "'");
}

ParameterVector::ParameterVector(LayoutPtr layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_->total_len()) {
    throw Error(ErrorCode::kLayoutMismatch,
                "value count " + std::to_string(values_.size()) +
                    " does not match layout length " +
                    std::to_string(layout_->total_len()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw Error(ErrorCode::kNonFinite,
                  "non-finite parameter at index " + std::to_string(i));
    }
  }
}

ParameterVector ParameterVector::zeros(LayoutPtr layout) {
  return filled(std::move(layout), 0.0);
}

ParameterVector ParameterVector::filled(LayoutPtr layout, double value) {
  const auto n = layout->total_len();
  return ParameterVector(std::move(layout), std::vector<double>(n, value));
}

bool ParameterVector::bit_equal(const ParameterVector& other) const {
  return *layout_ == *other.layout_ && values_.size() == other.values_.size() &&
         std::memcmp(values_.data(), other.values_.data(),
                     values_.size() * sizeof(double)) == 0;
}

ParameterVector make_vector(std::vector<double> values,
                            const std::string& name) {
  auto layout = std::make_shared<ModelLayout>(std::vector<TensorEntry>{
      {name, {static_cast<std::uint32_t>(values.size())}}});
  return ParameterVector(std::move(layout), std::move(values));
}

ParameterVector weighted_mean(std::span<const ParameterVector> vectors,
                              std::span<const double> weights) {
  if (vectors.empty()) {
    throw Error(ErrorCode::kEmptyUpdateSet, "weighted_mean of no vectors");
  }
  if (weights.size() != vectors.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "weight count does not match vector count");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::kDegenerateWeights,
                  "weights must be finite and non-negative");
    }
    total += w;
  }
  if (total <= 0.0) {
    throw Error(ErrorCode::kDegenerateWeights, "weights sum to zero");
  }
  for (const auto& v : vectors) require_same_layout(vectors.front(), v);

  const std::size_t n = vectors.front().size();
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    const double w = weights[k];
    const auto vals = vectors[k].values();
    for (std::size_t i = 0; i < n; ++i) out[i] += w * vals[i];
  }
  for (auto& x : out) x /= total;
  return ParameterVector(vectors.front().layout_ptr(), std::move(out));
}

double l2_norm(const ParameterVector& v) {
  // Scaled accumulation avoids overflow for very large coordinates.
  double scale = 0.0;
  double ssq = 1.0;
  for (double x : v.values()) {
    if (x == 0.0) continue;
    const double ax = std::fabs(x);
    if (scale < ax) {
      ssq = 1.0 + ssq * (scale / ax) * (scale / ax);
      scale = ax;
    } else {
      ssq += (ax / scale) * (ax / scale);
    }
  }
  return scale * std::sqrt(ssq);
}

ParameterVector axpy(double alpha, const ParameterVector& x,
                     const ParameterVector& y) {
  require_same_layout(x, y);
  std::vector<double> out(y.values().begin(), y.values().end());
  const auto xs = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * xs[i];
  return ParameterVector(y.layout_ptr(), std::move(out));
}

ParameterVector subtract(const ParameterVector& x, const ParameterVector& y) {
  require_same_layout(x, y);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return ParameterVector(x.layout_ptr(), std::move(out));
}

ParameterVector scale(double alpha, const ParameterVector& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * x[i];
  return ParameterVector(x.layout_ptr(), std::move(out));
}

std::vector<std::uint8_t> serialize(const ParameterVector& v) {
  std::vector<std::uint8_t> out;
  out.reserve(64 + v.size() * sizeof(double));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put<std::uint16_t>(out, kFormatVersion);
  const auto& entries = v.layout().entries();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put<std::uint32_t>(out, d);
  }
  const auto* p = reinterpret_cast<const std::uint8_t*>(v.values().data());
  out.insert(out.end(), p, p + v.size() * sizeof(double));
  return out;
}

ParameterVector deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.remaining() < 4 || std::memcmp(r.cursor(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kMalformedBlob, "bad magic in parameter blob");
  }
  r.get_string(4);
  if (const auto version = r.get<std::uint16_t>(); version != kFormatVersion) {
    throw Error(ErrorCode::kMalformedBlob,
                "unsupported blob version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<TensorEntry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorEntry e;
    e.name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank > r.remaining() / sizeof(std::uint32_t)) {
      throw Error(ErrorCode::kMalformedBlob, "truncated parameter blob");
    }
    for (std::uint32_t d = 0; d < rank; ++d) {
      e.shape.push_back(r.get<std::uint32_t>());
    }
    entries.push_back(std::move(e));
  }
  LayoutPtr layout;
  try {
    layout = std::make_shared<ModelLayout>(std::move(entries));
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformedBlob, e.what());
  }
  const std::size_t n = layout->total_len();
  if (r.remaining() != n * sizeof(double)) {
    throw Error(ErrorCode::kMalformedBlob,
                "payload length " + std::to_string(r.remaining()) +
                    " does not match layout (" +
                    std::to_string(n * sizeof(double)) + " bytes)");
  }
  std::vector<double> values(n);
  std::memcpy(values.data(), r.cursor(), n * sizeof(double));
  return ParameterVector(std::move(layout), std::move(values));
}

}  // namespace fedsilo
