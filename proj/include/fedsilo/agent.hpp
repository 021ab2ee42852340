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

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fedsilo/dataset.hpp"
#include "fedsilo/dispatch.hpp"
#include "fedsilo/privacy.hpp"

namespace fedsilo {

// On-disk agent configuration written by `agent register` and read by
// `agent run`. Holds the agent token, so it is saved owner-only.
struct AgentConfig {
  std::string server_url;
  std::string endpoint_id;
  std::string agent_token;
  std::string federation_id;
  std::string name;
  std::optional<std::string> ca_cert_file;
  bool tls_verify = true;
  std::optional<DataLoaderSpec> data;
  // When set, overrides the privacy settings carried by train tasks.
  std::optional<PrivacyConfig> privacy;
  std::int64_t heartbeat_interval_ms = 5000;
  std::int64_t poll_wait_ms = 20'000;
  std::int64_t backoff_min_ms = 1000;
  std::int64_t backoff_max_ms = 60'000;
};

AgentConfig parse_agent_config(const nlohmann::json& j);
nlohmann::json to_json(const AgentConfig& c);
AgentConfig load_agent_config(const std::filesystem::path& path);
void save_agent_config(const std::filesystem::path& path, const AgentConfig& c);

// Samples host metrics from /proc. Rates and CPU load are computed from the
// difference to the previous call; the first call reports zero for both.
class ResourceSampler {
 public:
  ResourceMetrics sample(TimestampMs now);

 private:
  struct Snapshot {
    std::uint64_t cpu_busy = 0, cpu_total = 0;
    std::uint64_t tx = 0, rx = 0;
    TimestampMs at = 0;
  };
  std::optional<Snapshot> prev_;
};

// Everything the agent needs from the server. The HTTP implementation is the
// production path; the direct one talks to an in-process Dispatch.
class AgentTransport {
 public:
  virtual ~AgentTransport() = default;
  virtual std::vector<TaskEnvelope> poll(std::int64_t wait_ms) = 0;
  virtual void submit(const TaskResult& result) = 0;
  virtual void heartbeat(const ResourceMetrics& metrics) = 0;
  virtual std::vector<std::uint8_t> blob_get(const std::string& digest) = 0;
  virtual std::string blob_put(std::span<const std::uint8_t> bytes) = 0;
};

using TransportFactory = std::function<std::unique_ptr<AgentTransport>()>;

TransportFactory http_transport_factory(const AgentConfig& config);
TransportFactory direct_transport_factory(Dispatch& dispatch, std::string agent_token,
                                          std::string endpoint_id);

struct AgentStats {
  std::int64_t tasks_completed = 0;
  std::int64_t tasks_failed = 0;
  std::int64_t results_dropped = 0;
  std::int64_t network_errors = 0;
  std::int64_t heartbeats = 0;
};

class Agent {
 public:
  using LogFn = std::function<void(const std::string&)>;

  // Loads the dataset from config.data.
  Agent(AgentConfig config, TransportFactory transports, LogFn log = {});
  Agent(AgentConfig config, LocalDataset data, TransportFactory transports, LogFn log = {});
  ~Agent();

  // Runs the heartbeat and poll loops until stop(). Throws Unauthorized when
  // the server rejects the agent token.
  void run();
  void stop();
  bool running() const { return running_; }

  // Runs one task to completion and builds its result; never throws for
  // task-level failures.
  TaskResult execute(const TaskEnvelope& task, AgentTransport& transport);

  AgentStats stats() const;
  const LocalDataset& dataset() const { return data_; }

  // Test hook: extra delay before each train task, to model slow silos.
  void set_train_delay_ms(std::int64_t ms) { train_delay_ms_ = ms; }

 private:
  void heartbeat_loop();
  void log(const std::string& line) const;
  // Sleeps up to ms; returns false when stop() was called.
  bool sleep_for(std::int64_t ms);
  void deliver(const TaskResult& result, AgentTransport& transport);

  AgentConfig config_;
  LocalDataset data_;
  TransportFactory transports_;
  LogFn log_;
  std::atomic<bool> running_{false};
  std::atomic<bool> stop_{false};
  std::atomic<bool> auth_failed_{false};
  std::atomic<std::int64_t> train_delay_ms_{0};
  mutable std::mutex mu_;
  std::condition_variable cv_;
  AgentStats stats_;
};

}  // namespace fedsilo
