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

#include "fedsilo/wire.hpp"

#include "fedsilo/error.hpp"

namespace fedsilo {

using nlohmann::json;

namespace {

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (const auto it = j.find(key); it != j.end() && !it->is_null()) {
    it->get_to(out);
  }
}

}  // namespace

void to_json(json& j, const TrainingMetrics& m) {
  j = {{"loss", m.loss},
       {"accuracy", m.accuracy},
       {"train_seconds", m.train_seconds},
       {"num_samples", m.num_samples}};
}

void from_json(const json& j, TrainingMetrics& m) {
  m = {};
  get_if(j, "loss", m.loss);
  get_if(j, "accuracy", m.accuracy);
  get_if(j, "train_seconds", m.train_seconds);
  get_if(j, "num_samples", m.num_samples);
}

void to_json(json& j, const AggregatorHyper& h) {
  j = {{"server_lr", h.server_lr},
       {"server_momentum", h.server_momentum},
       {"beta1", h.beta1},
       {"beta2", h.beta2},
       {"adaptivity", h.adaptivity},
       {"async_alpha", h.async_alpha},
       {"staleness_exponent", h.staleness_exponent},
       {"buffer_size", h.buffer_size}};
}

void from_json(const json& j, AggregatorHyper& h) {
  h = {};
  get_if(j, "server_lr", h.server_lr);
  get_if(j, "server_momentum", h.server_momentum);
  get_if(j, "beta1", h.beta1);
  get_if(j, "beta2", h.beta2);
  get_if(j, "adaptivity", h.adaptivity);
  get_if(j, "async_alpha", h.async_alpha);
  get_if(j, "staleness_exponent", h.staleness_exponent);
  get_if(j, "buffer_size", h.buffer_size);
}

void to_json(json& j, const ResourceMetrics& m) {
  j = {{"cpu_percent", m.cpu_percent},
       {"gpu_percent", m.gpu_percent ? json(*m.gpu_percent) : json(nullptr)},
       {"mem_used_bytes", m.mem_used_bytes},
       {"mem_total_bytes", m.mem_total_bytes},
       {"net_tx_bytes_per_s", m.net_tx_bytes_per_s},
       {"net_rx_bytes_per_s", m.net_rx_bytes_per_s},
       {"sampled_at", m.sampled_at}};
}

void from_json(const json& j, ResourceMetrics& m) {
  m = {};
  j.at("cpu_percent").get_to(m.cpu_percent);
  if (j.contains("gpu_percent") && !j["gpu_percent"].is_null()) {
    m.gpu_percent = j["gpu_percent"].get<double>();
  }
  j.at("mem_used_bytes").get_to(m.mem_used_bytes);
  j.at("mem_total_bytes").get_to(m.mem_total_bytes);
  get_if(j, "net_tx_bytes_per_s", m.net_tx_bytes_per_s);
  get_if(j, "net_rx_bytes_per_s", m.net_rx_bytes_per_s);
  get_if(j, "sampled_at", m.sampled_at);
}

void to_json(json& j, const EndpointRecord& r) {
  j = {{"endpoint_id", r.endpoint_id},
       {"federation_id", r.federation_id},
       {"owner_account_id", r.owner_account_id},
       {"name", r.name},
       {"device_type", device_type_name(r.device_type)},
       {"status", endpoint_status_name(r.status)},
       {"last_heartbeat", r.last_heartbeat},
       {"resources", r.resources ? json(*r.resources) : json(nullptr)}};
}

void from_json(const json& j, EndpointRecord& r) {
  r = {};
  j.at("endpoint_id").get_to(r.endpoint_id);
  j.at("federation_id").get_to(r.federation_id);
  get_if(j, "owner_account_id", r.owner_account_id);
  j.at("name").get_to(r.name);
  r.device_type = device_type_from_name(j.at("device_type").get<std::string>());
  const auto status = j.value("status", "offline");
  r.status = status == "online" ? EndpointStatus::kOnline
             : status == "busy" ? EndpointStatus::kBusy
                                : EndpointStatus::kOffline;
  get_if(j, "last_heartbeat", r.last_heartbeat);
  if (j.contains("resources") && !j["resources"].is_null()) {
    r.resources = j["resources"].get<ResourceMetrics>();
  }
}

void to_json(json& j, const TaskEnvelope& e) {
  j = {{"task_id", e.task_id},
       {"experiment_id", e.experiment_id},
       {"round", e.round},
       {"kind", task_kind_name(e.kind)},
       {"config_payload", e.config_payload},
       {"model_blob", e.model_blob ? json(*e.model_blob) : json(nullptr)},
       {"deadline", e.deadline}};
}

void from_json(const json& j, TaskEnvelope& e) {
  e = {};
  j.at("task_id").get_to(e.task_id);
  j.at("experiment_id").get_to(e.experiment_id);
  j.at("round").get_to(e.round);
  e.kind = task_kind_from_name(j.at("kind").get<std::string>());
  get_if(j, "config_payload", e.config_payload);
  if (j.contains("model_blob") && !j["model_blob"].is_null()) {
    e.model_blob = j["model_blob"].get<std::string>();
  }
  get_if(j, "deadline", e.deadline);
}

void to_json(json& j, const TaskResult& r) {
  j = {{"task_id", r.task_id},
       {"status", r.status == TaskStatus::kSuccess ? "success" : "failure"},
       {"result_blob", r.result_blob ? json(*r.result_blob) : json(nullptr)},
       {"metrics", r.metrics},
       {"error_message", r.error_message ? json(*r.error_message) : json(nullptr)},
       {"wall_seconds", r.wall_seconds},
       {"payload", r.payload}};
}

void from_json(const json& j, TaskResult& r) {
  r = {};
  j.at("task_id").get_to(r.task_id);
  const auto status = j.at("status").get<std::string>();
  if (status != "success" && status != "failure") {
    throw Error(ErrorCode::kInvalidArgument, "status must be success or failure");
  }
  r.status = status == "success" ? TaskStatus::kSuccess : TaskStatus::kFailure;
  if (j.contains("result_blob") && !j["result_blob"].is_null()) {
    r.result_blob = j["result_blob"].get<std::string>();
  }
  get_if(j, "metrics", r.metrics);
  if (j.contains("error_message") && !j["error_message"].is_null()) {
    r.error_message = j["error_message"].get<std::string>();
  }
  get_if(j, "wall_seconds", r.wall_seconds);
  get_if(j, "payload", r.payload);
}

void to_json(json& j, const BlobDigest& d) {
  j = {{"sha256", d.sha256}, {"size_bytes", d.size_bytes}};
}

void from_json(const json& j, BlobDigest& d) {
  j.at("sha256").get_to(d.sha256);
  j.at("size_bytes").get_to(d.size_bytes);
}

}  // namespace fedsilo
