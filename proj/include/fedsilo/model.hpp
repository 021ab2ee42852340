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
#include <string_view>
#include <vector>

#include "fedsilo/params.hpp"

namespace fedsilo {

enum class ModelKind { kLogisticRegression, kMlp, kCnn2 };
enum class LossKind { kCrossEntropy, kMse };

std::string_view model_kind_name(ModelKind k);
ModelKind model_kind_from_name(std::string_view s);
std::string_view loss_kind_name(LossKind k);
LossKind loss_kind_from_name(std::string_view s);

struct ModelSpec {
  ModelKind kind = ModelKind::kMlp;
  // [features] for logistic_regression/mlp (a [C,H,W] shape is flattened);
  // [C,H,W] for cnn2.
  std::vector<std::uint32_t> input_shape;
  std::uint32_t num_classes = 10;
  // mlp: hidden layer widths. cnn2: width of the single hidden dense layer.
  std::vector<std::uint32_t> hidden_sizes;
  // cnn2 only: output channels and square kernel size of both conv layers.
  std::vector<std::uint32_t> channels;
  std::vector<std::uint32_t> kernel_sizes;
  std::uint64_t init_seed = 0;

  std::size_t input_size() const;
  // Throws InvalidConfig with field-level messages.
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

LayoutPtr model_layout(const ModelSpec& spec);

// Glorot-uniform weights and zero biases from spec.init_seed; identical on
// every host that shares the floating-point environment.
ParameterVector init_model(const ModelSpec& spec);

struct BatchStats {
  double loss_sum = 0.0;
  std::int64_t correct = 0;
  std::int64_t count = 0;
};

// Forward/backward over a batch of flattened inputs. Gradient accumulation
// is a sum over samples (callers divide by the batch size); `grad` may be
// empty for inference.
class Network {
 public:
  virtual ~Network() = default;

  static std::unique_ptr<Network> create(const ModelSpec& spec);

  virtual std::size_t input_size() const = 0;
  virtual std::size_t param_count() const = 0;

  virtual BatchStats run(std::span<const double> params,
                         std::span<const double> inputs,
                         std::span<const int> labels, LossKind loss,
                         std::span<double> grad) const = 0;
};

// Per-sample loss on logits; writes d loss / d logits into dlogits when
// non-empty. Returns the loss.
double logits_loss(std::span<const double> logits, int label, LossKind loss,
                   std::span<double> dlogits);

}  // namespace fedsilo
