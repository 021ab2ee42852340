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

#include "fedsilo/aggregation.hpp"
#include "fedsilo/dataset.hpp"
#include "fedsilo/model.hpp"
#include "fedsilo/params.hpp"

namespace fedsilo {

struct TrainOptions {
  int epochs = 1;
  int batch_size = 64;
  double lr = 0.01;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kCrossEntropy;
};

struct TrainOutcome {
  ParameterVector weights;
  // loss: mean over the final epoch; accuracy: running train accuracy of the
  // final epoch; num_samples: train split size.
  TrainingMetrics metrics;
};

// Plain mini-batch SGD with a seeded per-epoch shuffle of the train split.
// Deterministic for fixed inputs. Throws NonFiniteLoss on divergence.
TrainOutcome local_train(const ParameterVector& model, const ModelSpec& spec,
                         const LocalDataset& data, const TrainOptions& options);

enum class Split { kTrain, kVal };

// Loss and accuracy on one split without touching the model. Throws
// EmptySplit when the split has no rows.
TrainingMetrics evaluate(const ParameterVector& model, const ModelSpec& spec,
                         const LocalDataset& data, Split split,
                         LossKind loss = LossKind::kCrossEntropy);

// Mean loss and its gradient over the given rows; exposed for gradient checks.
double loss_and_gradient(const Network& net, std::span<const double> params,
                         const LocalDataset& data, std::span<const std::size_t> rows,
                         LossKind loss, std::span<double> grad);

}  // namespace fedsilo
