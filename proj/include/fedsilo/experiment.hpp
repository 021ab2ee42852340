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
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedsilo/aggregation.hpp"
#include "fedsilo/clock.hpp"
#include "fedsilo/dataset.hpp"
#include "fedsilo/model.hpp"
#include "fedsilo/privacy.hpp"

namespace fedsilo {

enum class ExperimentStatus { kCreated, kRunning, kFinished, kFailed, kCancelled };

std::string_view experiment_status_name(ExperimentStatus s);
ExperimentStatus experiment_status_from_name(std::string_view s);
bool is_terminal(ExperimentStatus s);

struct ExperimentConfig {
  std::string experiment_id;
  std::string federation_id;
  std::string name;
  Algorithm algorithm = Algorithm::kFedAvg;
  ModelSpec model_spec;
  LossKind loss = LossKind::kCrossEntropy;
  int rounds = 1;
  int local_epochs = 1;
  int batch_size = 64;
  double client_lr = 0.01;
  double lr_decay = 1.0;
  AggregatorHyper aggregator_hyper;
  PrivacyConfig privacy;
  std::vector<std::string> roster;
  double quorum_fraction = 1.0;
  double round_timeout_s = 600.0;
  std::uint64_t seed = 0;

  // Throws InvalidConfig with one message per offending field.
  void validate() const;
  double lr_for_round(std::int64_t round) const;
  bool operator==(const ExperimentConfig&) const = default;
};

struct ClientRoundEntry {
  std::string status;  // success | failure | missing | cancelled
  TrainingMetrics metrics;
  double wall_seconds = 0.0;
  std::optional<std::int64_t> staleness;  // async only
  std::optional<double> val_accuracy;
  std::optional<double> val_loss;
  std::optional<std::int64_t> val_samples;
  std::optional<std::string> error;
  bool operator==(const ClientRoundEntry&) const = default;
};

struct RoundRecord {
  std::int64_t round = 0;
  std::map<std::string, ClientRoundEntry> per_client;
  std::optional<double> global_val_accuracy;
  std::optional<double> global_val_loss;
  TimestampMs started_at = 0;
  TimestampMs finished_at = 0;
  double client_lr_used = 0.0;
  bool operator==(const RoundRecord&) const = default;
};

struct LogLine {
  TimestampMs ts = 0;
  std::string text;
  bool operator==(const LogLine&) const = default;
};

struct ExperimentRecord {
  ExperimentConfig config;
  ExperimentStatus status = ExperimentStatus::kCreated;
  std::vector<RoundRecord> rounds;
  std::vector<LogLine> log;
  std::optional<std::string> final_model;
  std::map<std::string, std::vector<std::int64_t>> data_histograms;
  std::string created_by;
  TimestampMs created_at = 0;
  std::optional<std::string> failure_reason;
  bool operator==(const ExperimentRecord&) const = default;
};

// Strict parsing: unknown enum names, wrong types and missing required fields
// are collected into one InvalidConfig error keyed by field path.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);

ModelSpec parse_model_spec(const nlohmann::json& j);
nlohmann::json to_json(const ModelSpec& s);
PrivacyConfig parse_privacy_config(const nlohmann::json& j);
nlohmann::json to_json(const PrivacyConfig& p);
DataLoaderSpec parse_data_loader_spec(const nlohmann::json& j);
nlohmann::json to_json(const DataLoaderSpec& s);

nlohmann::json to_json(const RoundRecord& r);
RoundRecord round_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentRecord& r, bool include_log = true);
ExperimentRecord experiment_record_from_json(const nlohmann::json& j);

// A commented example config matching the desk-scale MNIST FedAvgM setup.
std::string experiment_config_template();

}  // namespace fedsilo
