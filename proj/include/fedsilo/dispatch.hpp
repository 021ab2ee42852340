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

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fedsilo/aggregation.hpp"
#include "fedsilo/blob_store.hpp"
#include "fedsilo/clock.hpp"
#include "fedsilo/iam.hpp"

namespace fedsilo {

enum class DeviceType { kCpu, kGpu };
enum class EndpointStatus { kOnline, kOffline, kBusy };

struct ResourceMetrics {
  double cpu_percent = 0.0;
  std::optional<double> gpu_percent;
  std::uint64_t mem_used_bytes = 0;
  std::uint64_t mem_total_bytes = 0;
  double net_tx_bytes_per_s = 0.0;
  double net_rx_bytes_per_s = 0.0;
  TimestampMs sampled_at = 0;

  // Throws InvalidMetrics when a field is out of range.
  void validate() const;
  bool operator==(const ResourceMetrics&) const = default;
};

struct EndpointRecord {
  std::string endpoint_id;
  std::string federation_id;
  std::string owner_account_id;
  std::string name;
  DeviceType device_type = DeviceType::kCpu;
  EndpointStatus status = EndpointStatus::kOffline;
  TimestampMs last_heartbeat = 0;  // 0 = never
  std::optional<ResourceMetrics> resources;
};

enum class TaskKind { kTrain, kEvaluate, kDataHistogram };

struct TaskEnvelope {
  std::string task_id;
  std::string experiment_id;
  std::int64_t round = 0;
  TaskKind kind = TaskKind::kTrain;
  nlohmann::json config_payload = nlohmann::json::object();
  std::optional<std::string> model_blob;
  TimestampMs deadline = 0;
};

enum class TaskStatus { kSuccess, kFailure };

struct TaskResult {
  std::string task_id;
  TaskStatus status = TaskStatus::kSuccess;
  std::optional<std::string> result_blob;
  TrainingMetrics metrics;
  std::optional<std::string> error_message;
  double wall_seconds = 0.0;
  // Kind-specific output, e.g. the label histogram of a data_histogram task.
  nlohmann::json payload = nlohmann::json::object();
};

// Delivered to the experiment that owns a task.
struct DispatchEvent {
  enum class Kind { kResult, kExpired, kCancelled };
  Kind kind = Kind::kResult;
  std::string endpoint_id;
  TaskEnvelope envelope;
  std::optional<TaskResult> result;
};

struct DispatchOptions {
  std::int64_t heartbeat_interval_ms = 5000;
  int offline_after_missed = 3;
};

// The task fabric: endpoint registry, FIFO per-endpoint queues delivered by
// agent long-polls, result intake, heartbeats and model blob transfer.
// Agents only ever call in; nothing here connects out to an endpoint.
class Dispatch {
 public:
  using Listener = std::function<void(const DispatchEvent&)>;

  Dispatch(IdentityService& iam, BlobStore& blobs, const Clock& clock,
           std::optional<std::filesystem::path> registry_file = {},
           DispatchOptions options = {});
  ~Dispatch();

  // Returns the record and an agent-scoped token (shown once).
  std::pair<EndpointRecord, std::string> register_endpoint(
      const std::string& token, const std::string& federation_id,
      const std::string& name, DeviceType device_type);

  std::vector<EndpointRecord> list_endpoints(const std::string& token,
                                             const std::string& federation_id) const;
  EndpointRecord endpoint(const std::string& endpoint_id) const;

  // Long-poll: returns queued tasks at once, or waits up to max_wait_ms and
  // returns an empty list. Delivered tasks move to in-flight.
  std::vector<TaskEnvelope> poll_tasks(const std::string& agent_token,
                                       const std::string& endpoint_id,
                                       std::int64_t max_wait_ms,
                                       std::size_t max_tasks = 0);

  void submit_result(const std::string& agent_token, const TaskResult& result);

  void heartbeat(const std::string& agent_token, const std::string& endpoint_id,
                 const ResourceMetrics& metrics);

  // federation_id is required for api tokens and ignored for agent tokens.
  BlobDigest blob_put(const std::string& token,
                      std::span<const std::uint8_t> bytes,
                      const std::optional<std::string>& federation_id = {});
  std::vector<std::uint8_t> blob_get(const std::string& token,
                                     const std::string& digest) const;

  // Orchestrator-side entry points (no bearer token; trusted in-process).
  void enqueue_task(const std::string& endpoint_id,
                    const std::string& federation_id, TaskEnvelope envelope);
  void cancel_task(const std::string& task_id);
  BlobDigest put_internal(std::span<const std::uint8_t> bytes,
                          const std::string& federation_id);
  std::vector<std::uint8_t> get_internal(const std::string& digest) const;

  void set_listener(const std::string& experiment_id, Listener listener);
  void remove_listener(const std::string& experiment_id);

  // Expires queued and in-flight tasks whose deadline has passed.
  void sweep();

  // Releases every blocked poller with an empty response.
  void wake_all();

  EndpointStatus status_of(const std::string& endpoint_id) const;
  std::size_t queued_count(const std::string& endpoint_id) const;
  std::size_t in_flight_count() const;

 private:
  struct EndpointState {
    EndpointRecord record;
    std::deque<TaskEnvelope> queue;
  };
  struct InFlight {
    std::string endpoint_id;
    TaskEnvelope envelope;
  };

  std::string agent_endpoint(const std::string& agent_token,
                             const std::string& endpoint_id) const;
  EndpointStatus status_locked(const EndpointState& ep) const;
  EndpointRecord snapshot_locked(const EndpointState& ep) const;
  void emit(std::vector<DispatchEvent> events);
  void cancel_member_tasks(const std::string& federation_id,
                           const std::string& account_id);
  void persist_locked() const;
  void load();

  IdentityService& iam_;
  BlobStore& blobs_;
  const Clock& clock_;
  std::optional<std::filesystem::path> registry_file_;
  DispatchOptions options_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::uint64_t wake_generation_ = 0;
  std::map<std::string, EndpointState> endpoints_;
  std::map<std::string, InFlight> in_flight_;
  std::map<std::string, std::string> queued_index_;  // task_id -> endpoint_id
  std::set<std::string> completed_;
  std::set<std::string> retired_;  // expired or cancelled

  std::mutex listener_mu_;
  std::map<std::string, Listener> listeners_;
};

std::string_view task_kind_name(TaskKind k);
TaskKind task_kind_from_name(std::string_view s);
std::string_view endpoint_status_name(EndpointStatus s);
std::string_view device_type_name(DeviceType d);
DeviceType device_type_from_name(std::string_view s);

}  // namespace fedsilo
