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

#include "fedsilo/dispatch.hpp"

#include <chrono>
#include <cmath>

#include "fedsilo/crypto.hpp"
#include "fedsilo/error.hpp"
#include "fedsilo/fs_util.hpp"

namespace fedsilo {

using nlohmann::json;

std::string_view task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::kTrain:
      return "train";
    case TaskKind::kEvaluate:
      return "evaluate";
    case TaskKind::kDataHistogram:
      return "data_histogram";
  }
  return "train";
}

TaskKind task_kind_from_name(std::string_view s) {
  if (s == "train") return TaskKind::kTrain;
  if (s == "evaluate") return TaskKind::kEvaluate;
  if (s == "data_histogram") return TaskKind::kDataHistogram;
  throw Error(ErrorCode::kInvalidArgument, "unknown task kind '" + std::string(s) + "'");
}

std::string_view endpoint_status_name(EndpointStatus s) {
  switch (s) {
    case EndpointStatus::kOnline:
      return "online";
    case EndpointStatus::kBusy:
      return "busy";
    case EndpointStatus::kOffline:
      return "offline";
  }
  return "offline";
}

std::string_view device_type_name(DeviceType d) {
  return d == DeviceType::kGpu ? "gpu" : "cpu";
}

DeviceType device_type_from_name(std::string_view s) {
  if (s == "cpu") return DeviceType::kCpu;
  if (s == "gpu") return DeviceType::kGpu;
  throw Error(ErrorCode::kInvalidArgument,
              "device type must be cpu or gpu, got '" + std::string(s) + "'");
}

void ResourceMetrics::validate() const {
  auto bad = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidMetrics, "invalid resource metrics: " + what);
  };
  if (!(cpu_percent >= 0.0 && cpu_percent <= 100.0)) bad("cpu_percent outside [0,100]");
  if (gpu_percent && !(*gpu_percent >= 0.0 && *gpu_percent <= 100.0)) {
    bad("gpu_percent outside [0,100]");
  }
  if (mem_used_bytes > mem_total_bytes) bad("mem_used exceeds mem_total");
  if (!(net_tx_bytes_per_s >= 0.0) || !(net_rx_bytes_per_s >= 0.0)) {
    bad("negative network rate");
  }
  if (sampled_at < 0) bad("negative timestamp");
}

Dispatch::Dispatch(IdentityService& iam, BlobStore& blobs, const Clock& clock,
                   std::optional<std::filesystem::path> registry_file,
                   DispatchOptions options)
    : iam_(iam),
      blobs_(blobs),
      clock_(clock),
      registry_file_(std::move(registry_file)),
      options_(options) {
  load();
  iam_.on_member_removed([this](const std::string& fed, const std::string& acct) {
    cancel_member_tasks(fed, acct);
  });
}

Dispatch::~Dispatch() { wake_all(); }

std::pair<EndpointRecord, std::string> Dispatch::register_endpoint(
    const std::string& token, const std::string& federation_id,
    const std::string& name, DeviceType device_type) {
  const auto account =
      iam_.authorize(token, federation_id, Role::kMember, Scope::kApi);
  if (name.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "endpoint name is required");
  }
  EndpointRecord rec;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, ep] : endpoints_) {
      if (ep.record.federation_id == federation_id && ep.record.name == name) {
        throw Error(ErrorCode::kDuplicateEndpointName,
                    "endpoint '" + name + "' already registered in this federation");
      }
    }
    rec.endpoint_id = crypto::random_id("ep");
    rec.federation_id = federation_id;
    rec.owner_account_id = account;
    rec.name = name;
    rec.device_type = device_type;
    endpoints_[rec.endpoint_id].record = rec;
    persist_locked();
  }
  auto agent = iam_.issue_agent_token(account, rec.endpoint_id);
  return {rec, agent.token};
}

std::vector<EndpointRecord> Dispatch::list_endpoints(
    const std::string& token, const std::string& federation_id) const {
  const auto account =
      iam_.authorize(token, federation_id, Role::kMember, Scope::kApi);
  bool admin = true;
  try {
    iam_.authorize(token, federation_id, Role::kAdmin, Scope::kApi);
  } catch (const Error&) {
    admin = false;
  }
  std::lock_guard lock(mu_);
  std::vector<EndpointRecord> out;
  for (const auto& [id, ep] : endpoints_) {
    if (ep.record.federation_id != federation_id) continue;
    auto rec = snapshot_locked(ep);
    // Resource telemetry is an admin view.
    if (!admin) rec.resources.reset();
    out.push_back(std::move(rec));
  }
  return out;
}

EndpointRecord Dispatch::endpoint(const std::string& endpoint_id) const {
  std::lock_guard lock(mu_);
  const auto it = endpoints_.find(endpoint_id);
  if (it == endpoints_.end()) {
    throw Error(ErrorCode::kUnknownEndpoint, "unknown endpoint " + endpoint_id);
  }
  return snapshot_locked(it->second);
}

std::string Dispatch::agent_endpoint(const std::string& agent_token,
                                     const std::string& endpoint_id) const {
  const auto who = iam_.authenticate(agent_token);
  if (!who.scopes.contains(Scope::kAgent) || !who.endpoint_id) {
    throw Error(ErrorCode::kUnauthorized, "agent token required");
  }
  if (!endpoint_id.empty() && *who.endpoint_id != endpoint_id) {
    throw Error(ErrorCode::kUnauthorized, "token is not valid for this endpoint");
  }
  std::string fed;
  {
    std::lock_guard lock(mu_);
    const auto it = endpoints_.find(*who.endpoint_id);
    if (it == endpoints_.end()) {
      throw Error(ErrorCode::kUnknownEndpoint, "unknown endpoint " + *who.endpoint_id);
    }
    fed = it->second.record.federation_id;
  }
  if (!iam_.is_active_member(fed, who.account_id)) {
    throw Error(ErrorCode::kForbidden, "endpoint owner is no longer a member");
  }
  return *who.endpoint_id;
}

std::vector<TaskEnvelope> Dispatch::poll_tasks(const std::string& agent_token,
                                               const std::string& endpoint_id,
                                               std::int64_t max_wait_ms,
                                               std::size_t max_tasks) {
  const auto ep_id = agent_endpoint(agent_token, endpoint_id);
  sweep();
  std::unique_lock lock(mu_);
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(std::max<std::int64_t>(0, max_wait_ms));
  const auto generation = wake_generation_;
  auto& ep = endpoints_.at(ep_id);
  cv_.wait_until(lock, deadline, [&] {
    return !ep.queue.empty() || wake_generation_ != generation;
  });
  std::vector<TaskEnvelope> out;
  while (!ep.queue.empty() && (max_tasks == 0 || out.size() < max_tasks)) {
    auto env = std::move(ep.queue.front());
    ep.queue.pop_front();
    queued_index_.erase(env.task_id);
    in_flight_[env.task_id] = {ep_id, env};
    out.push_back(std::move(env));
  }
  return out;
}

void Dispatch::submit_result(const std::string& agent_token,
                             const TaskResult& result) {
  const auto ep_id = agent_endpoint(agent_token, "");
  DispatchEvent event;
  {
    std::lock_guard lock(mu_);
    const auto it = in_flight_.find(result.task_id);
    if (it != in_flight_.end() && it->second.endpoint_id != ep_id) {
      throw Error(ErrorCode::kForbidden,
                  "task " + result.task_id + " is assigned to another endpoint");
    }
    if (it == in_flight_.end()) {
      if (completed_.contains(result.task_id)) {
        throw Error(ErrorCode::kDuplicateResult,
                    "result for " + result.task_id + " already accepted");
      }
      throw Error(ErrorCode::kUnknownTask,
                  "task " + result.task_id + " is not in flight for this endpoint");
    }
    const auto& env = it->second.envelope;
    if (result.status == TaskStatus::kSuccess && env.kind == TaskKind::kTrain) {
      if (!result.result_blob || !blobs_.contains(*result.result_blob)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "successful train result must reference an uploaded blob");
      }
    }
    if (result.status == TaskStatus::kFailure && !result.error_message) {
      throw Error(ErrorCode::kInvalidArgument,
                  "failed result must carry an error message");
    }
    if (!(result.wall_seconds >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "wall_seconds must be >= 0");
    }
    event.kind = DispatchEvent::Kind::kResult;
    event.endpoint_id = ep_id;
    event.envelope = env;
    event.result = result;
    completed_.insert(result.task_id);
    in_flight_.erase(it);
  }
  emit({std::move(event)});
}

void Dispatch::heartbeat(const std::string& agent_token,
                         const std::string& endpoint_id,
                         const ResourceMetrics& metrics) {
  const auto ep_id = agent_endpoint(agent_token, endpoint_id);
  metrics.validate();
  std::lock_guard lock(mu_);
  auto& rec = endpoints_.at(ep_id).record;
  rec.last_heartbeat = clock_.now_ms();
  rec.resources = metrics;
}

BlobDigest Dispatch::blob_put(const std::string& token,
                              std::span<const std::uint8_t> bytes,
                              const std::optional<std::string>& federation_id) {
  const auto who = iam_.authenticate(token);
  std::string fed;
  if (who.scopes.contains(Scope::kAgent) && who.endpoint_id) {
    agent_endpoint(token, *who.endpoint_id);
    fed = endpoint(*who.endpoint_id).federation_id;
  } else {
    if (!federation_id) {
      throw Error(ErrorCode::kInvalidArgument, "federation_id is required");
    }
    iam_.authorize(token, *federation_id, Role::kMember, Scope::kApi);
    fed = *federation_id;
  }
  return put_internal(bytes, fed);
}

std::vector<std::uint8_t> Dispatch::blob_get(const std::string& token,
                                             const std::string& digest) const {
  const auto who = iam_.authenticate(token);
  if (!blobs_.contains(digest)) {
    throw Error(ErrorCode::kNoSuchBlob, "no blob " + digest);
  }
  bool allowed = false;
  if (who.scopes.contains(Scope::kAgent) && who.endpoint_id) {
    const auto fed = endpoint(*who.endpoint_id).federation_id;
    allowed = iam_.is_active_member(fed, who.account_id) && blobs_.granted(digest, fed);
  } else {
    for (const auto& f : iam_.list_federations(token)) {
      if (blobs_.granted(digest, f.federation_id)) {
        allowed = true;
        break;
      }
    }
  }
  if (!allowed) throw Error(ErrorCode::kForbidden, "no access to blob " + digest);
  return blobs_.get(digest);
}

void Dispatch::enqueue_task(const std::string& endpoint_id,
                            const std::string& federation_id,
                            TaskEnvelope envelope) {
  if ((envelope.kind == TaskKind::kTrain || envelope.kind == TaskKind::kEvaluate) &&
      !envelope.model_blob) {
    throw Error(ErrorCode::kInvalidArgument, "train/evaluate tasks need a model blob");
  }
  {
    std::lock_guard lock(mu_);
    const auto it = endpoints_.find(endpoint_id);
    if (it == endpoints_.end()) {
      throw Error(ErrorCode::kUnknownEndpoint, "unknown endpoint " + endpoint_id);
    }
    if (it->second.record.federation_id != federation_id) {
      throw Error(ErrorCode::kCrossFederationDispatch,
                  "endpoint " + endpoint_id + " is outside federation " + federation_id);
    }
    if (queued_index_.contains(envelope.task_id) ||
        in_flight_.contains(envelope.task_id) ||
        completed_.contains(envelope.task_id) || retired_.contains(envelope.task_id)) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate task id " + envelope.task_id);
    }
    queued_index_[envelope.task_id] = endpoint_id;
    it->second.queue.push_back(std::move(envelope));
  }
  cv_.notify_all();
}

void Dispatch::cancel_task(const std::string& task_id) {
  std::lock_guard lock(mu_);
  if (auto q = queued_index_.find(task_id); q != queued_index_.end()) {
    auto& queue = endpoints_.at(q->second).queue;
    std::erase_if(queue, [&](const TaskEnvelope& e) { return e.task_id == task_id; });
    queued_index_.erase(q);
    retired_.insert(task_id);
  }
  if (in_flight_.erase(task_id) > 0) retired_.insert(task_id);
}

BlobDigest Dispatch::put_internal(std::span<const std::uint8_t> bytes,
                                  const std::string& federation_id) {
  auto d = blobs_.put(bytes);
  blobs_.grant(d.sha256, federation_id);
  return d;
}

std::vector<std::uint8_t> Dispatch::get_internal(const std::string& digest) const {
  return blobs_.get(digest);
}

void Dispatch::set_listener(const std::string& experiment_id, Listener listener) {
  std::lock_guard lock(listener_mu_);
  listeners_[experiment_id] = std::move(listener);
}

void Dispatch::remove_listener(const std::string& experiment_id) {
  std::lock_guard lock(listener_mu_);
  listeners_.erase(experiment_id);
}

void Dispatch::emit(std::vector<DispatchEvent> events) {
  for (auto& e : events) {
    Listener fn;
    {
      std::lock_guard lock(listener_mu_);
      const auto it = listeners_.find(e.envelope.experiment_id);
      if (it != listeners_.end()) fn = it->second;
    }
    if (fn) fn(e);
  }
}

void Dispatch::sweep() {
  const auto now = clock_.now_ms();
  std::vector<DispatchEvent> expired;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, ep] : endpoints_) {
      for (auto it = ep.queue.begin(); it != ep.queue.end();) {
        if (it->deadline <= now) {
          expired.push_back({DispatchEvent::Kind::kExpired, id, *it, std::nullopt});
          queued_index_.erase(it->task_id);
          retired_.insert(it->task_id);
          it = ep.queue.erase(it);
        } else {
          ++it;
        }
      }
    }
    for (auto it = in_flight_.begin(); it != in_flight_.end();) {
      if (it->second.envelope.deadline <= now) {
        expired.push_back({DispatchEvent::Kind::kExpired, it->second.endpoint_id,
                           it->second.envelope, std::nullopt});
        retired_.insert(it->first);
        it = in_flight_.erase(it);
      } else {
        ++it;
      }
    }
  }
  emit(std::move(expired));
}

void Dispatch::wake_all() {
  {
    std::lock_guard lock(mu_);
    ++wake_generation_;
  }
  cv_.notify_all();
}

void Dispatch::cancel_member_tasks(const std::string& federation_id,
                                   const std::string& account_id) {
  std::vector<DispatchEvent> cancelled;
  std::vector<std::string> endpoint_ids;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, ep] : endpoints_) {
      if (ep.record.federation_id != federation_id ||
          ep.record.owner_account_id != account_id) {
        continue;
      }
      endpoint_ids.push_back(id);
      for (auto& env : ep.queue) {
        queued_index_.erase(env.task_id);
        retired_.insert(env.task_id);
        cancelled.push_back({DispatchEvent::Kind::kCancelled, id, env, std::nullopt});
      }
      ep.queue.clear();
    }
    for (auto it = in_flight_.begin(); it != in_flight_.end();) {
      if (std::find(endpoint_ids.begin(), endpoint_ids.end(), it->second.endpoint_id) !=
          endpoint_ids.end()) {
        cancelled.push_back({DispatchEvent::Kind::kCancelled, it->second.endpoint_id,
                             it->second.envelope, std::nullopt});
        retired_.insert(it->first);
        it = in_flight_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (const auto& id : endpoint_ids) iam_.revoke_endpoint_tokens(id);
  emit(std::move(cancelled));
  wake_all();
}

EndpointStatus Dispatch::status_of(const std::string& endpoint_id) const {
  std::lock_guard lock(mu_);
  const auto it = endpoints_.find(endpoint_id);
  if (it == endpoints_.end()) {
    throw Error(ErrorCode::kUnknownEndpoint, "unknown endpoint " + endpoint_id);
  }
  return status_locked(it->second);
}

std::size_t Dispatch::queued_count(const std::string& endpoint_id) const {
  std::lock_guard lock(mu_);
  const auto it = endpoints_.find(endpoint_id);
  return it == endpoints_.end() ? 0 : it->second.queue.size();
}

std::size_t Dispatch::in_flight_count() const {
  std::lock_guard lock(mu_);
  return in_flight_.size();
}

EndpointStatus Dispatch::status_locked(const EndpointState& ep) const {
  const auto window = options_.heartbeat_interval_ms * options_.offline_after_missed;
  const auto last = ep.record.last_heartbeat;
  if (last == 0 || clock_.now_ms() - last > window) return EndpointStatus::kOffline;
  for (const auto& [task, f] : in_flight_) {
    if (f.endpoint_id == ep.record.endpoint_id) return EndpointStatus::kBusy;
  }
  return EndpointStatus::kOnline;
}

EndpointRecord Dispatch::snapshot_locked(const EndpointState& ep) const {
  auto rec = ep.record;
  rec.status = status_locked(ep);
  return rec;
}

void Dispatch::persist_locked() const {
  if (!registry_file_) return;
  json doc = json::array();
  for (const auto& [id, ep] : endpoints_) {
    const auto& r = ep.record;
    doc.push_back({{"endpoint_id", r.endpoint_id},
                   {"federation_id", r.federation_id},
                   {"owner_account_id", r.owner_account_id},
                   {"name", r.name},
                   {"device_type", device_type_name(r.device_type)}});
  }
  write_file_atomic(*registry_file_, doc.dump());
}

void Dispatch::load() {
  if (!registry_file_ || !std::filesystem::exists(*registry_file_)) return;
  for (const auto& j : json::parse(read_text_file(*registry_file_))) {
    EndpointRecord r;
    r.endpoint_id = j.at("endpoint_id");
    r.federation_id = j.at("federation_id");
    r.owner_account_id = j.at("owner_account_id");
    r.name = j.at("name");
    r.device_type = device_type_from_name(j.at("device_type").get<std::string>());
    endpoints_[r.endpoint_id].record = std::move(r);
  }
}

}  // namespace fedsilo
