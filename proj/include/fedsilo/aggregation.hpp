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

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedsilo/params.hpp"

namespace fedsilo {

enum class Algorithm {
  kFedAvg,
  kFedAvgM,
  kFedAdagrad,
  kFedAdam,
  kFedYogi,
  kFedAsync,
  kFedBuff,
};

std::string_view algorithm_name(Algorithm a);
Algorithm algorithm_from_name(std::string_view name);
bool is_async(Algorithm a);

enum class AdaptiveVariant { kAdagrad, kAdam, kYogi };

struct TrainingMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
  double train_seconds = 0.0;
  // Examples the metrics were computed over.
  std::int64_t num_samples = 0;

  bool operator==(const TrainingMetrics&) const = default;
};

struct ClientUpdate {
  std::string endpoint_id;
  std::int64_t base_round = 0;
  ParameterVector weights;
  std::int64_t sample_count = 1;
  TrainingMetrics metrics;
};

struct AggregatorHyper {
  double server_lr = 1.0;
  double server_momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adaptivity = 1e-3;
  double async_alpha = 0.9;
  double staleness_exponent = 0.5;
  int buffer_size = 3;

  // Throws InvalidConfig naming the offending fields.
  void validate() const;
  bool operator==(const AggregatorHyper&) const = default;
};

// A FedBuff contribution: the delta is taken against the global model at the
// moment the update was buffered.
struct BufferedDelta {
  std::string endpoint_id;
  ParameterVector delta;
};

struct AggregatorState {
  Algorithm algorithm = Algorithm::kFedAvg;
  ParameterVector global_model;
  std::int64_t round = 0;
  std::optional<ParameterVector> momentum;
  std::optional<ParameterVector> second_moment;
  std::vector<BufferedDelta> buffer;
  AggregatorHyper hyper;

  static AggregatorState initial(Algorithm algorithm, ParameterVector global,
                                 AggregatorHyper hyper = {});
};

// Sample-count-weighted mean of (client weights - current global).
ParameterVector pseudo_gradient(const AggregatorState& state,
                                std::span<const ClientUpdate> updates);

AggregatorState step_fedavg(const AggregatorState& state,
                            std::span<const ClientUpdate> updates);
AggregatorState step_fedavgm(const AggregatorState& state,
                             std::span<const ClientUpdate> updates);
AggregatorState step_fedadaptive(const AggregatorState& state,
                                 std::span<const ClientUpdate> updates,
                                 AdaptiveVariant variant);

// Polynomial staleness discount alpha * (s + 1)^(-a).
double staleness_weight(double alpha, double exponent, std::int64_t staleness);

AggregatorState step_fedasync(const AggregatorState& state,
                              const ClientUpdate& update);

struct FedBuffOutcome {
  AggregatorState state;
  bool emitted = false;
};
FedBuffOutcome step_fedbuff(const AggregatorState& state,
                            const ClientUpdate& update);

// Dispatches to the step function for state.algorithm. Synchronous
// algorithms take one or more updates, asynchronous ones exactly one.
AggregatorState aggregate(const AggregatorState& state,
                          std::span<const ClientUpdate> updates);

}  // namespace fedsilo
