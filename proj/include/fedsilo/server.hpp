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
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fedsilo/blob_store.hpp"
#include "fedsilo/clock.hpp"
#include "fedsilo/dispatch.hpp"
#include "fedsilo/iam.hpp"
#include "fedsilo/orchestrator.hpp"
#include "fedsilo/store.hpp"

namespace fedsilo {

// All server-side state under one data directory:
//   iam.json, endpoints.json   identity and endpoint registry
//   meta/, logs/               experiment records and log streams
//   blobs/                     content-addressed model blobs
class Service {
 public:
  struct Options {
    std::filesystem::path data_dir;
    DispatchOptions dispatch;
    OrchestratorOptions orchestrator;
  };

  Service(Options options, const Clock& clock);
  ~Service();

  IdentityService& iam() { return *iam_; }
  BlobStore& blobs() { return *blobs_; }
  Dispatch& dispatch() { return *dispatch_; }
  ExperimentStore& store() { return *store_; }
  Orchestrator& orchestrator() { return *orchestrator_; }

 private:
  std::unique_ptr<IdentityService> iam_;
  std::unique_ptr<BlobStore> blobs_;
  std::unique_ptr<Dispatch> dispatch_;
  std::unique_ptr<ExperimentStore> store_;
  std::unique_ptr<Orchestrator> orchestrator_;
};

struct RouteInfo {
  std::string method;
  std::string example_path;  // a concrete path matching the route
  bool requires_token = true;
};

// Every /api/v1 route the server registers.
const std::vector<RouteInfo>& api_routes();

struct ServerOptions {
  std::string bind_address = "127.0.0.1";
  int port = 8443;  // 0 picks a free port
  std::optional<std::filesystem::path> tls_cert;
  std::optional<std::filesystem::path> tls_key;
  // Plain HTTP is refused unless this is set and the bind address is loopback.
  bool insecure_http = false;
  std::optional<std::filesystem::path> static_dir;
  int worker_threads = 64;
  std::int64_t max_poll_wait_ms = 30'000;
};

class ApiServer {
 public:
  ApiServer(Service& service, ServerOptions options);
  ~ApiServer();

  // Binds and serves on a background thread; throws IoError when the port
  // cannot be bound.
  void start();
  // Releases long-polls and stops accepting connections. The service and its
  // state stay alive; start() may be called again.
  void stop();
  int port() const { return port_; }
  bool tls() const { return options_.tls_cert.has_value(); }

 private:
  struct Impl;
  Service& service_;
  ServerOptions options_;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace fedsilo
