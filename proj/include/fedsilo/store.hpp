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

#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "fedsilo/experiment.hpp"

namespace fedsilo {

// Experiment metadata (one JSON document per experiment, replaced atomically)
// plus one append-only log stream per experiment.
class ExperimentStore {
 public:
  explicit ExperimentStore(std::filesystem::path root);

  // Writes everything except the log.
  void save(const ExperimentRecord& record);
  void append_log(const std::string& experiment_id, const LogLine& line);
  std::vector<ExperimentRecord> load_all() const;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path meta_path(const std::string& id) const;
  std::filesystem::path log_path(const std::string& id) const;

  std::filesystem::path root_;
  mutable std::mutex mu_;
};

}  // namespace fedsilo
