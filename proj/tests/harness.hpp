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

// In-process federation used by the orchestrator, server and acceptance
// suites: one Service plus any number of agents on DirectTransport.

#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "fedsilo/agent.hpp"
#include "fedsilo/dataset.hpp"
#include "fedsilo/error.hpp"
#include "fedsilo/experiment.hpp"
#include "fedsilo/server.hpp"

namespace fedsilo::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("fedsilo-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Writes `count` synthetic digits as an IDX pair under dir and loads them.
inline LocalDataset synthetic_dataset(const fs::path& dir, std::size_t count,
                                      std::uint64_t seed, double val_fraction = 0.2,
                                      double noise = 0.35) {
  fs::create_directories(dir);
  const auto s = make_synthetic_images(count, seed, noise);
  write_idx_images(dir / "images.idx", s.images);
  write_idx_labels(dir / "labels.idx", s.labels);
  DataLoaderSpec spec;
  spec.format = DataFormat::kMnistIdx;
  spec.train_images = dir / "images.idx";
  spec.train_labels = dir / "labels.idx";
  spec.val_fraction = val_fraction;
  spec.shuffle_seed = seed;
  return load_dataset(spec);
}

inline bool wait_until(const std::function<bool()>& pred, std::int64_t timeout_ms) {
  const auto end = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (std::chrono::steady_clock::now() < end) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return pred();
}

class Federation {
 public:
  struct Silo {
    std::string name;
    std::string endpoint_id;
    std::string agent_token;
    std::unique_ptr<Agent> agent;
    std::thread thread;
  };

  explicit Federation(OrchestratorOptions orch = {}, DispatchOptions disp = {})
      : dir_("fed") {
    Service::Options o;
    o.data_dir = dir_.path() / "server";
    o.orchestrator = orch;
    o.dispatch = disp;
    service_ = std::make_unique<Service>(o, clock_);
    auto& iam = service_->iam();
    iam.create_account("Admin", "admin@silo.test", "admin-password-1");
    admin_token_ = iam.login("admin@silo.test", "admin-password-1").token;
    federation_id_ = iam.create_federation(admin_token_, "desk").federation_id;
  }

  ~Federation() { stop_agents(); }

  Service& service() { return *service_; }
  const std::string& admin_token() const { return admin_token_; }
  const std::string& federation_id() const { return federation_id_; }
  const fs::path& dir() const { return dir_.path(); }
  Silo& silo(std::size_t i) { return *silos_.at(i); }
  std::size_t size() const { return silos_.size(); }

  // Registers an endpoint without starting an agent.
  Silo& register_silo(const std::string& name) {
    auto s = std::make_unique<Silo>();
    s->name = name;
    auto [rec, token] = service_->dispatch().register_endpoint(admin_token_, federation_id_, name,
                                                               DeviceType::kCpu);
    s->endpoint_id = rec.endpoint_id;
    s->agent_token = token;
    silos_.push_back(std::move(s));
    return *silos_.back();
  }

  // Registers an endpoint and runs an agent for it on its own thread.
  Silo& add_silo(const std::string& name, LocalDataset data, std::int64_t train_delay_ms = 0,
                 std::optional<PrivacyConfig> privacy = std::nullopt) {
    auto& s = register_silo(name);
    start_agent(s, std::move(data), train_delay_ms, std::move(privacy));
    return s;
  }

  void start_agent(Silo& s, LocalDataset data, std::int64_t train_delay_ms = 0,
                   std::optional<PrivacyConfig> privacy = std::nullopt) {
    AgentConfig cfg;
    cfg.endpoint_id = s.endpoint_id;
    cfg.agent_token = s.agent_token;
    cfg.federation_id = federation_id_;
    cfg.poll_wait_ms = 500;
    cfg.backoff_min_ms = 50;
    cfg.backoff_max_ms = 200;
    cfg.privacy = std::move(privacy);
    s.agent = std::make_unique<Agent>(
        cfg, std::move(data),
        direct_transport_factory(service_->dispatch(), s.agent_token, s.endpoint_id));
    s.agent->set_train_delay_ms(train_delay_ms);
    auto* agent = s.agent.get();
    s.thread = std::thread([agent] {
      try {
        agent->run();
      } catch (const Error&) {
      }
    });
    const auto ep = s.endpoint_id;
    wait_until([&] { return service_->dispatch().status_of(ep) != EndpointStatus::kOffline; },
               5000);
  }

  void stop_agent(Silo& s) {
    if (!s.agent) return;
    s.agent->stop();
    service_->dispatch().wake_all();
    if (s.thread.joinable()) s.thread.join();
  }

  void stop_agents() {
    for (auto& s : silos_) s->agent ? s->agent->stop() : void();
    service_->dispatch().wake_all();
    for (auto& s : silos_) {
      if (s->thread.joinable()) s->thread.join();
    }
  }

  std::vector<std::string> roster() const {
    std::vector<std::string> out;
    for (const auto& s : silos_) out.push_back(s->endpoint_id);
    return out;
  }

  // A small mlp config over the synthetic digits.
  ExperimentConfig config(Algorithm algorithm, int rounds) const {
    ExperimentConfig c;
    c.federation_id = federation_id_;
    c.name = std::string(algorithm_name(algorithm));
    c.algorithm = algorithm;
    c.model_spec.kind = ModelKind::kMlp;
    c.model_spec.input_shape = {784};
    c.model_spec.num_classes = 10;
    c.model_spec.hidden_sizes = {16};
    c.model_spec.init_seed = 3;
    c.rounds = rounds;
    c.local_epochs = 1;
    c.batch_size = 32;
    c.client_lr = 0.05;
    c.lr_decay = 0.975;
    c.roster = roster();
    c.round_timeout_s = 60;
    c.seed = 11;
    return c;
  }

  ExperimentRecord run(const ExperimentConfig& c, std::int64_t timeout_ms = 120'000) {
    auto& orch = service_->orchestrator();
    const auto id = orch.launch(admin_token_, c).config.experiment_id;
    orch.wait(id, timeout_ms);
    return orch.get(admin_token_, id);
  }

 private:
  TempDir dir_;
  SystemClock clock_;
  std::unique_ptr<Service> service_;
  std::string admin_token_;
  std::string federation_id_;
  std::vector<std::unique_ptr<Silo>> silos_;
};

}  // namespace fedsilo::testing
