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

#include "fedsilo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "fedsilo/error.hpp"

namespace fedsilo {
namespace {

void check_layout(const ParameterVector& model, const ModelSpec& spec,
                  const LocalDataset& data) {
  if (!(model.layout() == *model_layout(spec))) {
    throw Error(ErrorCode::kLayoutMismatch, "model does not match its model spec");
  }
  if (data.num_features != spec.input_size()) {
    throw Error(ErrorCode::kLayoutMismatch,
                "dataset has " + std::to_string(data.num_features) +
                    " features, model expects " + std::to_string(spec.input_size()));
  }
}

// Gathers rows into a contiguous batch buffer.
void gather(const LocalDataset& data, std::span<const std::size_t> rows,
            std::vector<double>& x, std::vector<int>& y) {
  x.resize(rows.size() * data.num_features);
  y.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(data.row(rows[i]), data.num_features, x.data() + i * data.num_features);
    y[i] = data.labels[rows[i]];
  }
}

}  // namespace

double loss_and_gradient(const Network& net, std::span<const double> params,
                         const LocalDataset& data, std::span<const std::size_t> rows,
                         LossKind loss, std::span<double> grad) {
  std::vector<double> x;
  std::vector<int> y;
  gather(data, rows, x, y);
  std::fill(grad.begin(), grad.end(), 0.0);
  const auto stats = net.run(params, x, y, loss, grad);
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (auto& g : grad) g *= inv;
  return stats.loss_sum * inv;
}

TrainOutcome local_train(const ParameterVector& model, const ModelSpec& spec,
                         const LocalDataset& data, const TrainOptions& options) {
  if (options.epochs < 1 || options.batch_size < 1) {
    throw Error(ErrorCode::kInvalidArgument, "epochs and batch_size must be >= 1");
  }
  if (!(options.lr >= 0.0) || !std::isfinite(options.lr)) {
    throw Error(ErrorCode::kInvalidArgument, "learning rate must be finite and >= 0");
  }
  check_layout(model, spec, data);
  if (data.train_idx.empty()) {
    throw Error(ErrorCode::kEmptySplit, "no training rows");
  }
  const auto start = std::chrono::steady_clock::now();
  const auto net = Network::create(spec);
  std::vector<double> params(model.values().begin(), model.values().end());
  std::vector<double> grad(params.size());
  std::vector<std::size_t> order = data.train_idx;
  std::mt19937_64 rng(options.seed);
  std::vector<double> x;
  std::vector<int> y;

  double epoch_loss = 0.0;
  std::int64_t epoch_correct = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    epoch_correct = 0;
    for (std::size_t b = 0; b < order.size(); b += options.batch_size) {
      const auto rows = std::span(order).subspan(
          b, std::min<std::size_t>(options.batch_size, order.size() - b));
      gather(data, rows, x, y);
      std::fill(grad.begin(), grad.end(), 0.0);
      const auto stats = net->run(params, x, y, options.loss, grad);
      if (!std::isfinite(stats.loss_sum)) {
        throw Error(ErrorCode::kNonFiniteLoss,
                    "loss diverged in epoch " + std::to_string(epoch + 1));
      }
      epoch_loss += stats.loss_sum;
      epoch_correct += stats.correct;
      const double step = options.lr / static_cast<double>(rows.size());
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= step * grad[i];
    }
  }
  for (double p : params) {
    if (!std::isfinite(p)) {
      throw Error(ErrorCode::kNonFiniteLoss, "parameters diverged to non-finite values");
    }
  }
  const double n = static_cast<double>(order.size());
  TrainOutcome out{ParameterVector(model.layout_ptr(), std::move(params)), {}};
  out.metrics.loss = epoch_loss / n;
  out.metrics.accuracy = static_cast<double>(epoch_correct) / n;
  out.metrics.num_samples = static_cast<std::int64_t>(order.size());
  out.metrics.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

TrainingMetrics evaluate(const ParameterVector& model, const ModelSpec& spec,
                         const LocalDataset& data, Split split, LossKind loss) {
  check_layout(model, spec, data);
  const auto& rows = split == Split::kTrain ? data.train_idx : data.val_idx;
  if (rows.empty()) {
    throw Error(ErrorCode::kEmptySplit,
                split == Split::kTrain ? "train split is empty" : "validation split is empty");
  }
  const auto start = std::chrono::steady_clock::now();
  const auto net = Network::create(spec);
  std::vector<double> x;
  std::vector<int> y;
  BatchStats total;
  constexpr std::size_t kChunk = 256;
  for (std::size_t b = 0; b < rows.size(); b += kChunk) {
    const auto chunk = std::span(rows).subspan(b, std::min(kChunk, rows.size() - b));
    gather(data, chunk, x, y);
    const auto s = net->run(model.values(), x, y, loss, {});
    total.loss_sum += s.loss_sum;
    total.correct += s.correct;
    total.count += s.count;
  }
  TrainingMetrics m;
  m.loss = total.loss_sum / static_cast<double>(total.count);
  m.accuracy = static_cast<double>(total.correct) / static_cast<double>(total.count);
  m.num_samples = total.count;
  m.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

}  // namespace fedsilo
