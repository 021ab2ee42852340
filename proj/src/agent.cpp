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

#include "fedsilo/agent.hpp"

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "fedsilo/api_client.hpp"
#include "fedsilo/clock.hpp"
#include "fedsilo/error.hpp"
#include "fedsilo/experiment.hpp"
#include "fedsilo/fs_util.hpp"
#include "fedsilo/params.hpp"
#include "fedsilo/trainer.hpp"
#include "fedsilo/wire.hpp"

namespace fedsilo {

using nlohmann::json;

AgentConfig parse_agent_config(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidConfig, "agent config must be a JSON object");
  AgentConfig c;
  std::map<std::string, std::string> bad;
  auto str = [&](const char* key, std::string& out, bool required) {
    if (!j.contains(key)) {
      if (required) bad[key] = "required";
      return;
    }
    if (!j.at(key).is_string()) {
      bad[key] = "must be a string";
      return;
    }
    out = j.at(key).get<std::string>();
  };
  str("server_url", c.server_url, true);
  str("endpoint_id", c.endpoint_id, false);
  str("agent_token", c.agent_token, false);
  str("federation_id", c.federation_id, false);
  str("name", c.name, false);
  if (j.contains("ca_cert_file") && !j.at("ca_cert_file").is_null()) {
    std::string ca;
    str("ca_cert_file", ca, false);
    c.ca_cert_file = ca;
  }
  auto integer = [&](const char* key, std::int64_t& out, std::int64_t lo) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number_integer() || j.at(key).get<std::int64_t>() < lo) {
      bad[key] = "must be an integer >= " + std::to_string(lo);
      return;
    }
    out = j.at(key).get<std::int64_t>();
  };
  integer("heartbeat_interval_ms", c.heartbeat_interval_ms, 100);
  integer("poll_wait_ms", c.poll_wait_ms, 0);
  integer("backoff_min_ms", c.backoff_min_ms, 1);
  integer("backoff_max_ms", c.backoff_max_ms, 1);
  if (j.contains("tls_verify")) {
    if (j.at("tls_verify").is_boolean()) {
      c.tls_verify = j.at("tls_verify").get<bool>();
    } else {
      bad["tls_verify"] = "must be a boolean";
    }
  }
  if (!bad.empty()) throw Error(ErrorCode::kInvalidConfig, "invalid agent config", bad);
  if (j.contains("data") && !j.at("data").is_null()) c.data = parse_data_loader_spec(j.at("data"));
  if (j.contains("privacy") && !j.at("privacy").is_null()) {
    c.privacy = parse_privacy_config(j.at("privacy"));
  }
  return c;
}

json to_json(const AgentConfig& c) {
  json j = {{"server_url", c.server_url},
            {"endpoint_id", c.endpoint_id},
            {"agent_token", c.agent_token},
            {"federation_id", c.federation_id},
            {"name", c.name},
            {"tls_verify", c.tls_verify},
            {"heartbeat_interval_ms", c.heartbeat_interval_ms},
            {"poll_wait_ms", c.poll_wait_ms},
            {"backoff_min_ms", c.backoff_min_ms},
            {"backoff_max_ms", c.backoff_max_ms}};
  if (c.ca_cert_file) j["ca_cert_file"] = *c.ca_cert_file;
  if (c.data) j["data"] = to_json(*c.data);
  if (c.privacy) j["privacy"] = to_json(*c.privacy);
  return j;
}

AgentConfig load_agent_config(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  auto j = json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::kInvalidConfig, path.string() + " is not valid JSON");
  }
  return parse_agent_config(j);
}

void save_agent_config(const std::filesystem::path& path, const AgentConfig& c) {
  write_file_atomic(path, to_json(c).dump(2) + "\n");
}

// ---- resources ----

namespace {

std::optional<std::pair<std::uint64_t, std::uint64_t>> read_cpu() {
  std::ifstream in("/proc/stat");
  std::string cpu;
  if (!(in >> cpu) || cpu != "cpu") return std::nullopt;
  std::uint64_t v[8] = {};
  for (auto& x : v) in >> x;
  // user nice system idle iowait irq softirq steal
  const auto idle = v[3] + v[4];
  std::uint64_t total = 0;
  for (auto x : v) total += x;
  return std::pair{total - idle, total};
}

std::pair<std::uint64_t, std::uint64_t> read_memory() {
  std::ifstream in("/proc/meminfo");
  std::string key, unit;
  std::uint64_t value = 0, total = 0, available = 0;
  while (in >> key >> value) {
    std::getline(in, unit);
    if (key == "MemTotal:") total = value * 1024;
    if (key == "MemAvailable:") available = value * 1024;
  }
  if (available > total) available = total;
  return {total - available, total};
}

std::pair<std::uint64_t, std::uint64_t> read_net() {
  std::ifstream in("/proc/net/dev");
  std::string line;
  std::uint64_t tx = 0, rx = 0;
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    auto name = line.substr(0, colon);
    name.erase(0, name.find_first_not_of(' '));
    if (name == "lo") continue;
    std::istringstream fields(line.substr(colon + 1));
    std::uint64_t v[16] = {};
    for (auto& x : v) fields >> x;
    rx += v[0];
    tx += v[8];
  }
  return {tx, rx};
}

}  // namespace

ResourceMetrics ResourceSampler::sample(TimestampMs now) {
  ResourceMetrics m;
  m.sampled_at = now;
  const auto [used, total] = read_memory();
  m.mem_used_bytes = used;
  m.mem_total_bytes = total;
  Snapshot cur;
  cur.at = now;
  if (auto cpu = read_cpu()) {
    cur.cpu_busy = cpu->first;
    cur.cpu_total = cpu->second;
  }
  std::tie(cur.tx, cur.rx) = read_net();
  if (prev_) {
    const auto dt = cur.cpu_total - prev_->cpu_total;
    if (cur.cpu_total > prev_->cpu_total && cur.cpu_busy >= prev_->cpu_busy) {
      m.cpu_percent = std::clamp(100.0 * static_cast<double>(cur.cpu_busy - prev_->cpu_busy) /
                                     static_cast<double>(dt),
                                 0.0, 100.0);
    }
    const double secs = static_cast<double>(cur.at - prev_->at) / 1000.0;
    if (secs > 0) {
      if (cur.tx >= prev_->tx) m.net_tx_bytes_per_s = static_cast<double>(cur.tx - prev_->tx) / secs;
      if (cur.rx >= prev_->rx) m.net_rx_bytes_per_s = static_cast<double>(cur.rx - prev_->rx) / secs;
    }
  }
  prev_ = cur;
  return m;
}

// ---- transports ----

namespace {

class HttpTransport final : public AgentTransport {
 public:
  explicit HttpTransport(const AgentConfig& c)
      : endpoint_id_(c.endpoint_id),
        poll_wait_ms_(c.poll_wait_ms),
        client_(c.server_url, c.agent_token, ClientTlsOptions{c.ca_cert_file, c.tls_verify}) {
    client_.set_read_timeout_ms(c.poll_wait_ms + 15'000);
  }

  std::vector<TaskEnvelope> poll(std::int64_t wait_ms) override {
    std::ostringstream path;
    path << "/api/v1/endpoints/" << endpoint_id_ << "/tasks?max=1&wait="
         << static_cast<double>(wait_ms) / 1000.0;
    const auto j = client_.get(path.str());
    std::vector<TaskEnvelope> out;
    for (const auto& t : j.at("tasks")) {
      TaskEnvelope e;
      from_json(t, e);
      out.push_back(std::move(e));
    }
    return out;
  }

  void submit(const TaskResult& result) override {
    json j;
    to_json(j, result);
    client_.post("/api/v1/tasks/" + result.task_id + "/result", j);
  }

  void heartbeat(const ResourceMetrics& metrics) override {
    json j;
    to_json(j, metrics);
    client_.post("/api/v1/endpoints/" + endpoint_id_ + "/heartbeat", j);
  }

  std::vector<std::uint8_t> blob_get(const std::string& digest) override {
    return client_.get_bytes("/api/v1/blobs/" + digest);
  }

  std::string blob_put(std::span<const std::uint8_t> bytes) override {
    return client_.put_bytes("/api/v1/blobs", bytes).at("sha256").get<std::string>();
  }

 private:
  std::string endpoint_id_;
  std::int64_t poll_wait_ms_;
  ApiClient client_;
};

class DirectTransport final : public AgentTransport {
 public:
  DirectTransport(Dispatch& d, std::string token, std::string endpoint_id)
      : d_(d), token_(std::move(token)), endpoint_id_(std::move(endpoint_id)) {}

  std::vector<TaskEnvelope> poll(std::int64_t wait_ms) override {
    return d_.poll_tasks(token_, endpoint_id_, wait_ms, 1);
  }
  void submit(const TaskResult& result) override { d_.submit_result(token_, result); }
  void heartbeat(const ResourceMetrics& metrics) override {
    d_.heartbeat(token_, endpoint_id_, metrics);
  }
  std::vector<std::uint8_t> blob_get(const std::string& digest) override {
    return d_.blob_get(token_, digest);
  }
  std::string blob_put(std::span<const std::uint8_t> bytes) override {
    return d_.blob_put(token_, bytes, std::nullopt).sha256;
  }

 private:
  Dispatch& d_;
  std::string token_;
  std::string endpoint_id_;
};

bool is_transient(const Error& e) {
  if (e.code() == ErrorCode::kNetworkError || e.code() == ErrorCode::kUnavailable) return true;
  if (const auto* se = dynamic_cast<const ServerError*>(&e)) return se->http_status() >= 500;
  return false;
}

}  // namespace

TransportFactory http_transport_factory(const AgentConfig& config) {
  return [config] { return std::make_unique<HttpTransport>(config); };
}

TransportFactory direct_transport_factory(Dispatch& dispatch, std::string agent_token,
                                          std::string endpoint_id) {
  return [&dispatch, agent_token, endpoint_id] {
    return std::make_unique<DirectTransport>(dispatch, agent_token, endpoint_id);
  };
}

// ---- agent ----

Agent::Agent(AgentConfig config, TransportFactory transports, LogFn log)
    : config_(std::move(config)), transports_(std::move(transports)), log_(std::move(log)) {
  if (!config_.data) {
    throw Error(ErrorCode::kInvalidConfig, "agent config has no data section",
                {{"data", "required"}});
  }
  data_ = load_dataset(*config_.data);
}

Agent::Agent(AgentConfig config, LocalDataset data, TransportFactory transports, LogFn log)
    : config_(std::move(config)),
      data_(std::move(data)),
      transports_(std::move(transports)),
      log_(std::move(log)) {}

Agent::~Agent() { stop(); }

void Agent::log(const std::string& line) const {
  if (log_) log_(line);
}

bool Agent::sleep_for(std::int64_t ms) {
  std::unique_lock lock(mu_);
  return !cv_.wait_for(lock, std::chrono::milliseconds(ms), [&] { return stop_.load(); });
}

void Agent::stop() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
}

AgentStats Agent::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void Agent::heartbeat_loop() {
  auto transport = transports_();
  ResourceSampler sampler;
  const SystemClock clock;
  while (!stop_) {
    try {
      transport->heartbeat(sampler.sample(clock.now_ms()));
      std::lock_guard lock(mu_);
      ++stats_.heartbeats;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kUnauthorized) {
        log("heartbeat rejected: " + std::string(e.what()));
        auth_failed_ = true;
        stop();
        return;
      }
      // Transient failures are not retried early; the next beat is the retry.
      std::lock_guard lock(mu_);
      ++stats_.network_errors;
    }
    if (!sleep_for(config_.heartbeat_interval_ms)) return;
  }
}

void Agent::run() {
  stop_ = false;
  auth_failed_ = false;
  running_ = true;
  log("agent " + config_.endpoint_id + " started with " + std::to_string(data_.size()) +
      " samples");
  std::thread heartbeats([this] { heartbeat_loop(); });
  auto transport = transports_();
  std::int64_t backoff = config_.backoff_min_ms;
  while (!stop_) {
    std::vector<TaskEnvelope> tasks;
    try {
      tasks = transport->poll(config_.poll_wait_ms);
      backoff = config_.backoff_min_ms;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kUnauthorized || e.code() == ErrorCode::kForbidden) {
        log("poll rejected: " + std::string(e.what()));
        auth_failed_ = true;
        break;
      }
      {
        std::lock_guard lock(mu_);
        ++stats_.network_errors;
      }
      log("poll failed (" + std::string(e.what()) + "); retrying in " +
          std::to_string(backoff) + " ms");
      if (!sleep_for(backoff)) break;
      backoff = std::min(backoff * 2, config_.backoff_max_ms);
      continue;
    }
    for (const auto& task : tasks) {
      if (stop_) break;
      log("task " + task.task_id + " (" + std::string(task_kind_name(task.kind)) + ", round " +
          std::to_string(task.round) + ")");
      deliver(execute(task, *transport), *transport);
    }
  }
  stop();
  heartbeats.join();
  running_ = false;
  if (auth_failed_) {
    throw Error(ErrorCode::kUnauthorized,
                "server rejected the agent token for endpoint " + config_.endpoint_id);
  }
}

void Agent::deliver(const TaskResult& result, AgentTransport& transport) {
  std::int64_t backoff = config_.backoff_min_ms;
  int server_failures = 0;
  while (true) {
    try {
      transport.submit(result);
      std::lock_guard lock(mu_);
      if (result.status == TaskStatus::kSuccess) {
        ++stats_.tasks_completed;
      } else {
        ++stats_.tasks_failed;
      }
      return;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kDuplicateResult) return;  // an earlier attempt landed
      if (e.code() == ErrorCode::kUnauthorized) {
        auth_failed_ = true;
        stop();
        return;
      }
      const bool server_side = dynamic_cast<const ServerError*>(&e) != nullptr;
      if (!is_transient(e) || (server_side && ++server_failures > 5)) {
        log("result for " + result.task_id + " dropped: " + e.what());
        std::lock_guard lock(mu_);
        ++stats_.results_dropped;
        return;
      }
      {
        std::lock_guard lock(mu_);
        ++stats_.network_errors;
      }
      log("submit failed (" + std::string(e.what()) + "); retrying in " +
          std::to_string(backoff) + " ms");
      // The result is kept across a stop request only until the wait ends.
      if (!sleep_for(backoff)) return;
      backoff = std::min(backoff * 2, config_.backoff_max_ms);
    }
  }
}

namespace {

template <class F>
auto with_retry(F fn, std::int64_t backoff, std::int64_t max_backoff,
                const std::function<bool(std::int64_t)>& sleep) {
  for (;;) {
    try {
      return fn();
    } catch (const Error& e) {
      if (!is_transient(e)) throw;
      if (!sleep(backoff)) throw;
      backoff = std::min(backoff * 2, max_backoff);
    }
  }
}

}  // namespace

TaskResult Agent::execute(const TaskEnvelope& task, AgentTransport& transport) {
  using Clock = std::chrono::steady_clock;
  const auto started = Clock::now();
  TaskResult r;
  r.task_id = task.task_id;
  auto sleeper = [this](std::int64_t ms) { return sleep_for(ms); };
  try {
    const auto& p = task.config_payload;
    if (task.kind == TaskKind::kDataHistogram) {
      const auto h = label_histogram(data_);
      std::int64_t total = 0;
      for (auto c : h) total += c;
      r.payload = {{"histogram", h}};
      r.metrics.num_samples = total;
    } else {
      if (!task.model_blob) throw Error(ErrorCode::kInvalidArgument, "task has no model blob");
      const auto spec = parse_model_spec(p.at("model_spec"));
      const auto loss = loss_kind_from_name(p.value("loss", "cross_entropy"));
      const auto bytes = with_retry([&] { return transport.blob_get(*task.model_blob); },
                                    config_.backoff_min_ms, config_.backoff_max_ms, sleeper);
      const auto received = deserialize(bytes);
      if (!(received.layout() == *model_layout(spec))) {
        throw Error(ErrorCode::kLayoutMismatch, "model blob does not match the model spec");
      }
      if (task.kind == TaskKind::kEvaluate) {
        r.metrics = evaluate(received, spec, data_, Split::kVal, loss);
      } else {
        if (const auto delay = train_delay_ms_.load(); delay > 0) sleep_for(delay);
        TrainOptions opts;
        opts.epochs = p.at("epochs").get<int>();
        opts.batch_size = p.at("batch_size").get<int>();
        opts.lr = p.at("lr").get<double>();
        opts.seed = p.at("seed").get<std::uint64_t>();
        opts.loss = loss;
        auto outcome = local_train(received, spec, data_, opts);
        PrivacyConfig privacy;
        if (config_.privacy) {
          privacy = *config_.privacy;
        } else if (p.contains("privacy")) {
          privacy = parse_privacy_config(p.at("privacy"));
        }
        ParameterVector out;
        if (privacy.mechanism == PrivacyMechanism::kNone) {
          out = std::move(outcome.weights);
        } else {
          out = axpy(1.0, apply_dp(subtract(outcome.weights, received), privacy), received);
        }
        const auto blob = serialize(out);
        r.result_blob = with_retry([&] { return transport.blob_put(blob); },
                                   config_.backoff_min_ms, config_.backoff_max_ms, sleeper);
        r.metrics = outcome.metrics;
      }
    }
    r.status = TaskStatus::kSuccess;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kUnauthorized) {
      auth_failed_ = true;
      stop();
    }
    r.status = TaskStatus::kFailure;
    r.error_message = std::string(error_code_name(e.code())) + ": " + e.what();
    log("task " + task.task_id + " failed: " + *r.error_message);
  } catch (const std::exception& e) {
    r.status = TaskStatus::kFailure;
    r.error_message = std::string("Internal: ") + e.what();
    log("task " + task.task_id + " failed: " + *r.error_message);
  }
  r.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
  return r;
}

}  // namespace fedsilo
