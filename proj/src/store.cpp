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

#include "fedsilo/store.hpp"

#include <algorithm>
#include <fstream>

#include "fedsilo/error.hpp"
#include "fedsilo/fs_util.hpp"

namespace fedsilo {

namespace fs = std::filesystem;
using nlohmann::json;

ExperimentStore::ExperimentStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "meta");
  fs::create_directories(root_ / "logs");
}

fs::path ExperimentStore::meta_path(const std::string& id) const {
  return root_ / "meta" / (id + ".json");
}

fs::path ExperimentStore::log_path(const std::string& id) const {
  return root_ / "logs" / (id + ".log");
}

void ExperimentStore::save(const ExperimentRecord& record) {
  std::lock_guard lock(mu_);
  write_file_atomic(meta_path(record.config.experiment_id),
                    to_json(record, /*include_log=*/false).dump(1));
}

void ExperimentStore::append_log(const std::string& experiment_id, const LogLine& line) {
  std::lock_guard lock(mu_);
  std::ofstream out(log_path(experiment_id), std::ios::app | std::ios::binary);
  out << json{{"ts", line.ts}, {"text", line.text}}.dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::kIoError, "cannot append to log of " + experiment_id);
}

std::vector<ExperimentRecord> ExperimentStore::load_all() const {
  std::lock_guard lock(mu_);
  std::vector<ExperimentRecord> out;
  for (const auto& entry : fs::directory_iterator(root_ / "meta")) {
    if (entry.path().extension() != ".json") continue;
    auto record = experiment_record_from_json(json::parse(read_text_file(entry.path())));
    std::ifstream log(log_path(record.config.experiment_id));
    std::string line;
    while (std::getline(log, line)) {
      // A crash can leave a torn final line; everything before it is intact.
      const auto j = json::parse(line, nullptr, /*allow_exceptions=*/false);
      if (j.is_discarded()) break;
      record.log.push_back({j.at("ts").get<TimestampMs>(), j.at("text").get<std::string>()});
    }
    out.push_back(std::move(record));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.created_at != b.created_at ? a.created_at < b.created_at
                                        : a.config.experiment_id < b.config.experiment_id;
  });
  return out;
}

}  // namespace fedsilo
