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
#include <deque>
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "fedsilo/clock.hpp"
#include "fedsilo/dispatch.hpp"
#include "fedsilo/experiment.hpp"
#include "fedsilo/iam.hpp"
#include "fedsilo/store.hpp"

namespace fedsilo {

struct OrchestratorOptions {
  std::int64_t min_task_deadline_ms = 60'000;
  double deadline_factor = 10.0;  // x median train time of the previous round
  std::int64_t tick_ms = 200;     // supervisor wake-up for sweeps and timeouts
};

struct LogChunk {
  std::vector<LogLine> lines;
  std::size_t next_line = 0;
  ExperimentStatus status = ExperimentStatus::kCreated;
};

struct DistributionEntry {
  std::vector<std::int64_t> counts;
  bool empty = false;  // the client reported no training rows
};

class Orchestrator {
 public:
  // Loads persisted experiments; any left in created/running are marked
  // failed since their supervisors died with the previous process.
  Orchestrator(IdentityService& iam, Dispatch& dispatch, ExperimentStore& store,
               const Clock& clock, OrchestratorOptions options = {});
  ~Orchestrator();

  ExperimentRecord launch(const std::string& token, ExperimentConfig config);
  ExperimentRecord get(const std::string& token, const std::string& experiment_id) const;
  std::vector<ExperimentRecord> list(const std::string& token,
                                     const std::string& federation_id) const;
  // Lines from from_line on; waits up to wait_ms when none are available yet
  // and the experiment is still live.
  LogChunk stream_logs(const std::string& token, const std::string& experiment_id,
                       std::size_t from_line, std::int64_t wait_ms) const;
  void cancel(const std::string& token, const std::string& experiment_id);

  nlohmann::json report(const std::string& token, const std::string& experiment_id) const;
  nlohmann::json compare(const std::string& token, const std::vector<std::string>& ids) const;

  std::map<std::string, DistributionEntry> collect_data_distribution(
      const std::string& token, const std::string& federation_id,
      const std::vector<std::string>& roster, std::int64_t timeout_ms);

  // Test and CLI helper: blocks until the experiment is terminal or the
  // timeout passes; returns the status at that point.
  ExperimentStatus wait(const std::string& experiment_id, std::int64_t timeout_ms) const;

  // Stops all supervisors; running experiments are marked failed.
  void shutdown();

 private:
  struct Run;
  class Supervisor;

  std::shared_ptr<Run> find(const std::string& experiment_id) const;
  std::shared_ptr<Run> authorized(const std::string& token, const std::string& experiment_id,
                                  Role role) const;
  void check_roster(const ExperimentConfig& config) const;

  IdentityService& iam_;
  Dispatch& dispatch_;
  ExperimentStore& store_;
  const Clock& clock_;
  OrchestratorOptions options_;

  mutable std::mutex runs_mu_;
  std::map<std::string, std::shared_ptr<Run>> runs_;
  std::atomic<bool> stopping_{false};
};

// Sample-count-weighted mean of client validation metrics. Clients with no
// validation rows carry no weight; returns nullopt when nothing is left.
struct GlobalMetrics {
  double accuracy = 0.0;
  double loss = 0.0;
};
std::optional<GlobalMetrics> weighted_validation(
    const std::map<std::string, ClientRoundEntry>& per_client);

}  // namespace fedsilo
