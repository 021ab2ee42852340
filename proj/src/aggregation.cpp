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

#include "fedsilo/aggregation.hpp"

#include <cmath>
#include <map>

#include "fedsilo/error.hpp"

namespace fedsilo {
namespace {

struct NamedAlgorithm {
  Algorithm algorithm;
  std::string_view name;
};

constexpr NamedAlgorithm kAlgorithms[] = {
    {Algorithm::kFedAvg, "FedAvg"},       {Algorithm::kFedAvgM, "FedAvgM"},
    {Algorithm::kFedAdagrad, "FedAdagrad"}, {Algorithm::kFedAdam, "FedAdam"},
    {Algorithm::kFedYogi, "FedYogi"},     {Algorithm::kFedAsync, "FedAsync"},
    {Algorithm::kFedBuff, "FedBuff"},
};

void check_updates(const AggregatorState& state,
                   std::span<const ClientUpdate> updates) {
  if (updates.empty()) {
    throw Error(ErrorCode::kEmptyUpdateSet, "no client updates to aggregate");
  }
  for (const auto& u : updates) {
    if (!u.weights.same_layout(state.global_model)) {
      throw Error(ErrorCode::kLayoutMismatch,
                  "update from '" + u.endpoint_id +
                      "' does not match the global model layout");
    }
    if (u.sample_count < 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  "update from '" + u.endpoint_id + "' has sample_count < 1");
    }
  }
}

std::int64_t staleness_of(const AggregatorState& state,
                          const ClientUpdate& update) {
  if (update.base_round > state.round) {
    throw Error(ErrorCode::kNegativeStaleness,
                "update from '" + update.endpoint_id + "' claims base round " +
                    std::to_string(update.base_round) +
                    " ahead of server round " + std::to_string(state.round));
  }
  return state.round - update.base_round;
}

AggregatorState advanced(const AggregatorState& state, ParameterVector global) {
  AggregatorState next = state;
  next.global_model = std::move(global);
  next.round = state.round + 1;
  return next;
}

}  // namespace

std::string_view algorithm_name(Algorithm a) {
  for (const auto& n : kAlgorithms) {
    if (n.algorithm == a) return n.name;
  }
  return "FedAvg";
}

Algorithm algorithm_from_name(std::string_view name) {
  for (const auto& n : kAlgorithms) {
    if (n.name == name) return n.algorithm;
  }
  throw Error(ErrorCode::kInvalidConfig,
              "unknown algorithm '" + std::string(name) + "'",
              {{"algorithm", "must be one of FedAvg, FedAvgM, FedAdagrad, "
                             "FedAdam, FedYogi, FedAsync, FedBuff"}});
}

bool is_async(Algorithm a) {
  return a == Algorithm::kFedAsync || a == Algorithm::kFedBuff;
}

void AggregatorHyper::validate() const {
  std::map<std::string, std::string> bad;
  if (!(server_lr > 0.0)) bad["server_lr"] = "must be > 0";
  if (!(server_momentum >= 0.0 && server_momentum < 1.0)) {
    bad["server_momentum"] = "must be in [0, 1)";
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0)) bad["beta1"] = "must be in [0, 1)";
  if (!(beta2 >= 0.0 && beta2 < 1.0)) bad["beta2"] = "must be in [0, 1)";
  if (!(adaptivity > 0.0)) bad["adaptivity"] = "must be > 0";
  if (!(async_alpha > 0.0 && async_alpha <= 1.0)) {
    bad["async_alpha"] = "must be in (0, 1]";
  }
  if (!(staleness_exponent >= 0.0)) bad["staleness_exponent"] = "must be >= 0";
  if (buffer_size < 1) bad["buffer_size"] = "must be >= 1";
  if (!bad.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "invalid aggregator hyper-parameters",
                std::move(bad));
  }
}

AggregatorState AggregatorState::initial(Algorithm algorithm,
                                         ParameterVector global,
                                         AggregatorHyper hyper) {
  hyper.validate();
  AggregatorState s;
  s.algorithm = algorithm;
  s.global_model = std::move(global);
  s.hyper = hyper;
  return s;
}

ParameterVector pseudo_gradient(const AggregatorState& state,
                                std::span<const ClientUpdate> updates) {
  check_updates(state, updates);
  std::vector<ParameterVector> deltas;
  std::vector<double> weights;
  deltas.reserve(updates.size());
  for (const auto& u : updates) {
    deltas.push_back(subtract(u.weights, state.global_model));
    weights.push_back(static_cast<double>(u.sample_count));
  }
  return weighted_mean(deltas, weights);
}

AggregatorState step_fedavg(const AggregatorState& state,
                            std::span<const ClientUpdate> updates) {
  check_updates(state, updates);
  std::vector<ParameterVector> models;
  std::vector<double> weights;
  for (const auto& u : updates) {
    models.push_back(u.weights);
    weights.push_back(static_cast<double>(u.sample_count));
  }
  return advanced(state, weighted_mean(models, weights));
}

AggregatorState step_fedavgm(const AggregatorState& state,
                             std::span<const ClientUpdate> updates) {
  const auto delta = pseudo_gradient(state, updates);
  const auto& hp = state.hyper;
  std::vector<double> m(delta.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double prev = state.momentum ? (*state.momentum)[i] : 0.0;
    m[i] = hp.server_momentum * prev + delta[i];
  }
  ParameterVector momentum(state.global_model.layout_ptr(), std::move(m));
  auto next =
      advanced(state, axpy(hp.server_lr, momentum, state.global_model));
  next.momentum = std::move(momentum);
  return next;
}

AggregatorState step_fedadaptive(const AggregatorState& state,
                                 std::span<const ClientUpdate> updates,
                                 AdaptiveVariant variant) {
  const auto delta = pseudo_gradient(state, updates);
  const auto& hp = state.hyper;
  const auto layout = state.global_model.layout_ptr();
  const std::size_t n = delta.size();

  std::vector<double> m(n, 0.0);
  std::vector<double> v(n, hp.adaptivity * hp.adaptivity);
  if (state.momentum) {
    m.assign(state.momentum->values().begin(), state.momentum->values().end());
  }
  if (state.second_moment) {
    v.assign(state.second_moment->values().begin(),
             state.second_moment->values().end());
  }

  std::vector<double> global(state.global_model.values().begin(),
                             state.global_model.values().end());
  for (std::size_t i = 0; i < n; ++i) {
    const double d = delta[i];
    const double d2 = d * d;
    m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * d;
    switch (variant) {
      case AdaptiveVariant::kAdagrad:
        v[i] = v[i] + d2;
        break;
      case AdaptiveVariant::kAdam:
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * d2;
        break;
      case AdaptiveVariant::kYogi: {
        const double diff = v[i] - d2;
        const double sign = (diff > 0.0) - (diff < 0.0);
        v[i] = v[i] - (1.0 - hp.beta2) * d2 * sign;
        break;
      }
    }
    global[i] += hp.server_lr * m[i] / (std::sqrt(v[i]) + hp.adaptivity);
  }

  auto next = advanced(state, ParameterVector(layout, std::move(global)));
  next.momentum = ParameterVector(layout, std::move(m));
  next.second_moment = ParameterVector(layout, std::move(v));
  return next;
}

double staleness_weight(double alpha, double exponent, std::int64_t staleness) {
  return alpha * std::pow(static_cast<double>(staleness) + 1.0, -exponent);
}

AggregatorState step_fedasync(const AggregatorState& state,
                              const ClientUpdate& update) {
  check_updates(state, std::span(&update, 1));
  const auto s = staleness_of(state, update);
  const double a =
      staleness_weight(state.hyper.async_alpha, state.hyper.staleness_exponent, s);
  std::vector<double> out(state.global_model.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 - a) * state.global_model[i] + a * update.weights[i];
  }
  return advanced(state,
                  ParameterVector(state.global_model.layout_ptr(), std::move(out)));
}

FedBuffOutcome step_fedbuff(const AggregatorState& state,
                            const ClientUpdate& update) {
  check_updates(state, std::span(&update, 1));
  staleness_of(state, update);

  FedBuffOutcome out{state, false};
  out.state.buffer.push_back(
      {update.endpoint_id, subtract(update.weights, state.global_model)});
  if (static_cast<int>(out.state.buffer.size()) < state.hyper.buffer_size) {
    return out;
  }

  std::vector<ParameterVector> deltas;
  for (auto& b : out.state.buffer) deltas.push_back(std::move(b.delta));
  const std::vector<double> ones(deltas.size(), 1.0);
  const auto mean_delta = weighted_mean(deltas, ones);
  out.state = advanced(state, axpy(state.hyper.server_lr, mean_delta,
                                   state.global_model));
  out.state.buffer.clear();
  out.emitted = true;
  return out;
}

AggregatorState aggregate(const AggregatorState& state,
                          std::span<const ClientUpdate> updates) {
  if (is_async(state.algorithm)) {
    if (updates.size() != 1) {
      throw Error(ErrorCode::kAlgorithmArityMismatch,
                  std::string(algorithm_name(state.algorithm)) +
                      " takes exactly one update per call, got " +
                      std::to_string(updates.size()));
    }
    if (state.algorithm == Algorithm::kFedAsync) {
      return step_fedasync(state, updates.front());
    }
    return step_fedbuff(state, updates.front()).state;
  }
  if (updates.empty()) {
    throw Error(ErrorCode::kAlgorithmArityMismatch,
                "synchronous aggregation needs at least one update");
  }
  switch (state.algorithm) {
    case Algorithm::kFedAvg:
      return step_fedavg(state, updates);
    case Algorithm::kFedAvgM:
      return step_fedavgm(state, updates);
    case Algorithm::kFedAdagrad:
      return step_fedadaptive(state, updates, AdaptiveVariant::kAdagrad);
    case Algorithm::kFedAdam:
      return step_fedadaptive(state, updates, AdaptiveVariant::kAdam);
    case Algorithm::kFedYogi:
      return step_fedadaptive(state, updates, AdaptiveVariant::kYogi);
    default:
      break;
  }
  throw Error(ErrorCode::kInternal, "unhandled algorithm");
}

}  // namespace fedsilo
