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

// Route-by-route access checks against a live ApiServer, shared by the server
// tests and the acceptance run. Each check returns the probes that answered
// with an unexpected status; an empty list means every route held.

#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "fedsilo/api_client.hpp"
#include "fedsilo/server.hpp"
#include "fedsilo/wire.hpp"
#include "harness.hpp"

namespace fedsilo::testing {

struct ProbeReport {
  int checked = 0;
  std::vector<std::string> failures;

  void expect(int got, int want, const std::string& method, const std::string& path) {
    ++checked;
    if (got != want) {
      failures.push_back(method + " " + path + " -> " + std::to_string(got) + " (want " +
                         std::to_string(want) + ")");
    }
  }
};

inline std::string base_url(const ApiServer& s) {
  return std::string(s.tls() ? "https" : "http") + "://127.0.0.1:" + std::to_string(s.port());
}

// Every token-guarded route rejects a missing and a bogus token with 401; the
// account-creation and login routes answer without one.
inline ProbeReport probe_unauthenticated(const std::string& base, const std::string& email) {
  ProbeReport r;
  ApiClient anon(base);
  ApiClient bogus(base, std::string(64, 'a'));
  for (const auto& route : api_routes()) {
    if (!route.requires_token) continue;
    r.expect(anon.status_of(route.method, route.example_path, "{}"), 401, route.method,
             route.example_path + " (no token)");
    r.expect(bogus.status_of(route.method, route.example_path, "{}"), 401, route.method,
             route.example_path + " (bogus token)");
  }
  const std::string creds = R"({"email":")" + email + R"(","password":"long-password-1"})";
  r.expect(anon.status_of("POST", "/api/v1/auth/accounts",
                          R"({"display_name":"N","email":")" + email +
                              R"(","password":"long-password-1"})"),
           201, "POST", "/api/v1/auth/accounts");
  r.expect(anon.status_of("POST", "/api/v1/auth/login", creds), 200, "POST", "/api/v1/auth/login");
  r.expect(anon.status_of("POST", "/api/v1/auth/login",
                          R"({"email":")" + email + R"(","password":"wrong-password-1"})"),
           401, "POST", "/api/v1/auth/login (wrong password)");
  return r;
}

// Federation A (the harness federation, with one finished experiment and a
// parked task) probed by an outsider who owns federation B and its endpoint.
inline ProbeReport probe_cross_federation(Federation& f, const std::string& base) {
  ProbeReport r;
  auto& silo = f.size() > 0 ? f.silo(0) : f.add_silo("a1", synthetic_dataset(f.dir() / "a", 80, 1));
  const auto rec = f.run(f.config(Algorithm::kFedAvg, 1));
  if (rec.status != ExperimentStatus::kFinished || !rec.final_model) {
    r.failures.push_back("setup experiment did not finish");
    return r;
  }
  const auto exp_a = rec.config.experiment_id;
  const auto fed_a = f.federation_id();
  const auto blob_a = *rec.final_model;

  auto& iam = f.service().iam();
  iam.create_account("Bea", "bea@b.test", "bea-password-1");
  const auto bea = iam.login("bea@b.test", "bea-password-1").token;
  const auto fed_b = iam.create_federation(bea, "b").federation_id;
  auto [ep_b, agent_b] =
      f.service().dispatch().register_endpoint(bea, fed_b, "b1", DeviceType::kCpu);

  // Park a task for silo a1 so its id is known.
  TaskEnvelope env;
  env.task_id = "task_parked";
  env.experiment_id = exp_a;
  env.kind = TaskKind::kDataHistogram;
  env.deadline = SystemClock().now_ms() + 60'000;
  f.stop_agent(silo);
  f.service().dispatch().enqueue_task(silo.endpoint_id, fed_a, env);
  f.service().dispatch().poll_tasks(silo.agent_token, silo.endpoint_id, 0, 1);

  ApiClient as_bea(base, bea);
  ApiClient as_agent_b(base, agent_b);
  const auto config_a = to_json(f.config(Algorithm::kFedAvg, 1)).dump();
  const std::vector<std::tuple<std::string, std::string, std::string>> api_probes{
      {"GET", "/api/v1/federations/" + fed_a, ""},
      {"POST", "/api/v1/federations/" + fed_a + "/invitations", R"({"email":"x@y.test"})"},
      {"DELETE", "/api/v1/federations/" + fed_a + "/members/acct_x", ""},
      {"POST", "/api/v1/federations/" + fed_a + "/distribution", "{}"},
      {"GET", "/api/v1/federations/" + fed_a + "/experiments", ""},
      {"POST", "/api/v1/endpoints", R"({"federation_id":")" + fed_a + R"(","name":"intruder"})"},
      {"GET", "/api/v1/endpoints?federation_id=" + fed_a, ""},
      {"GET", "/api/v1/endpoints/" + silo.endpoint_id, ""},
      {"PUT", "/api/v1/blobs?federation_id=" + fed_a, "FSPV"},
      {"GET", "/api/v1/blobs/" + blob_a, ""},
      {"POST", "/api/v1/experiments", config_a},
      {"GET", "/api/v1/experiments?federation_id=" + fed_a, ""},
      {"GET", "/api/v1/experiments/compare?ids=" + exp_a + "," + exp_a, ""},
      {"GET", "/api/v1/experiments/" + exp_a, ""},
      {"GET", "/api/v1/experiments/" + exp_a + "/logs", ""},
      {"GET", "/api/v1/experiments/" + exp_a + "/report", ""},
      {"POST", "/api/v1/experiments/" + exp_a + "/cancel", ""},
  };
  for (const auto& [method, path, body] : api_probes) {
    r.expect(as_bea.status_of(method, path, body), 403, method, path);
  }
  // Agent credentials of federation B against federation A's fabric.
  const auto tasks = "/api/v1/endpoints/" + silo.endpoint_id + "/tasks";
  const auto beat = "/api/v1/endpoints/" + silo.endpoint_id + "/heartbeat";
  r.expect(as_agent_b.status_of("GET", tasks), 401, "GET", tasks + " (agent B)");
  r.expect(as_agent_b.status_of("POST", beat,
                                R"({"cpu_percent":1,"mem_used_bytes":1,"mem_total_bytes":2,
                                    "net_tx_bytes_per_s":0,"net_rx_bytes_per_s":0,"sampled_at":1})"),
           401, "POST", beat + " (agent B)");
  r.expect(as_agent_b.status_of("POST", "/api/v1/tasks/task_parked/result",
                                R"({"status":"failure","error_message":"x"})"),
           403, "POST", "/api/v1/tasks/task_parked/result (agent B)");
  r.expect(as_agent_b.status_of("GET", "/api/v1/blobs/" + blob_a), 403, "GET",
           "/api/v1/blobs/<A's model> (agent B)");
  // An API token cannot act as an agent.
  const auto tasks_b = "/api/v1/endpoints/" + ep_b.endpoint_id + "/tasks";
  r.expect(as_bea.status_of("GET", tasks_b), 401, "GET", tasks_b + " (API token)");
  return r;
}

}  // namespace fedsilo::testing
