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

#include <gtest/gtest.h>

#include "fedsilo/api_client.hpp"
#include "fedsilo/error.hpp"
#include "fedsilo/params.hpp"
#include "fedsilo/server.hpp"
#include "fedsilo/wire.hpp"
#include "access_probes.hpp"
#include "harness.hpp"
#include "tls_util.hpp"

namespace fedsilo {
namespace {

using nlohmann::json;
using testing::Federation;
using testing::synthetic_dataset;
using testing::wait_until;

std::string base_of(const ApiServer& s) { return testing::base_url(s); }

ServerOptions plain_options() {
  ServerOptions o;
  o.port = 0;
  o.insecure_http = true;
  o.worker_threads = 16;
  return o;
}

TEST(ApiServerConfig, RefusesPlainHttpUnlessLoopbackAndFlagged) {
  Federation f;
  ServerOptions o;
  o.port = 0;
  EXPECT_THROW(ApiServer(f.service(), o), Error);
  o.insecure_http = true;
  o.bind_address = "0.0.0.0";
  EXPECT_THROW(ApiServer(f.service(), o), Error);
  o.bind_address = "127.0.0.1";
  EXPECT_NO_THROW(ApiServer(f.service(), o));
  ServerOptions half;
  half.tls_cert = "cert.pem";
  EXPECT_THROW(ApiServer(f.service(), half), Error);
}

TEST(ApiServerHttp, EveryRouteRequiresAToken) {
  Federation f;
  ApiServer server(f.service(), plain_options());
  server.start();
  const auto r = testing::probe_unauthenticated(base_of(server), "n@x.test");
  EXPECT_GE(r.checked, 50);
  EXPECT_TRUE(r.failures.empty()) << ::testing::PrintToString(r.failures);
}

TEST(ApiServerHttp, CrossFederationAccessIsForbidden) {
  Federation f;
  ApiServer server(f.service(), plain_options());
  server.start();
  const auto r = testing::probe_cross_federation(f, base_of(server));
  EXPECT_EQ(r.checked, 22);
  EXPECT_TRUE(r.failures.empty()) << ::testing::PrintToString(r.failures);
}

TEST(ApiServerHttp, ErrorBodyAndStaticIndex) {
  Federation f;
  ApiServer server(f.service(), plain_options());
  server.start();
  ApiClient client(base_of(server), f.admin_token());
  try {
    client.post("/api/v1/experiments", json{{"name", "x"}, {"algorithm", "Nope"}});
    FAIL() << "expected InvalidConfig";
  } catch (const ServerError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
    EXPECT_EQ(e.http_status(), 400);
    EXPECT_TRUE(e.fields().contains("algorithm"));
  }
  EXPECT_EQ(client.status_of("GET", "/api/v1/no/such/route"), 404);
  EXPECT_EQ(client.status_of("GET", "/"), 200);
  const auto me = client.get("/api/v1/auth/me");
  EXPECT_EQ(me.at("email"), "admin@silo.test");
}

TEST(ApiServerHttp, LongPollWakesOnEnqueue) {
  Federation f;
  auto& silo = f.register_silo("lp");
  ApiServer server(f.service(), plain_options());
  server.start();
  ApiClient agent(base_of(server), silo.agent_token);
  std::thread producer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    TaskEnvelope env;
    env.task_id = "task_lp";
    env.experiment_id = "exp_lp";
    env.kind = TaskKind::kDataHistogram;
    env.deadline = SystemClock().now_ms() + 60'000;
    f.service().dispatch().enqueue_task(silo.endpoint_id, f.federation_id(), env);
  });
  const auto t0 = std::chrono::steady_clock::now();
  const auto j = agent.get("/api/v1/endpoints/" + silo.endpoint_id + "/tasks?wait=10");
  const auto waited = std::chrono::steady_clock::now() - t0;
  producer.join();
  ASSERT_EQ(j.at("tasks").size(), 1u);
  EXPECT_EQ(j.at("tasks")[0].at("task_id"), "task_lp");
  EXPECT_LT(waited, std::chrono::seconds(5));
}

class TlsServer : public ::testing::Test {
 protected:
  void SetUp() override {
    certs = testing::make_self_signed_cert(f.dir());
    ServerOptions o;
    o.port = 0;
    o.tls_cert = certs.cert;
    o.tls_key = certs.key;
    o.worker_threads = 16;
    server = std::make_unique<ApiServer>(f.service(), o);
    server->start();
  }

  Federation f;
  testing::CertFiles certs;
  std::unique_ptr<ApiServer> server;
};

TEST_F(TlsServer, VerifiedClientConnects) {
  ApiClient ok(base_of(*server), f.admin_token(), ClientTlsOptions{certs.cert.string(), true});
  EXPECT_EQ(ok.get("/api/v1/federations").at("federations").size(), 1u);
  // Without the CA the handshake is refused.
  ApiClient untrusted(base_of(*server), f.admin_token(), ClientTlsOptions{std::nullopt, true});
  try {
    untrusted.get("/api/v1/federations");
    FAIL() << "expected a certificate failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNetworkError);
  }
}

TEST_F(TlsServer, ExperimentOverHttpsAgents) {
  // Two agents speak HTTPS to the server; the experiment runs as usual.
  std::vector<std::unique_ptr<Agent>> agents;
  std::vector<std::thread> threads;
  for (int i = 0; i < 2; ++i) {
    auto& s = f.register_silo("h" + std::to_string(i));
    AgentConfig cfg;
    cfg.server_url = base_of(*server);
    cfg.endpoint_id = s.endpoint_id;
    cfg.agent_token = s.agent_token;
    cfg.ca_cert_file = certs.cert.string();
    cfg.poll_wait_ms = 1000;
    agents.push_back(std::make_unique<Agent>(
        cfg, synthetic_dataset(f.dir() / ("h" + std::to_string(i)), 100, 40 + i),
        http_transport_factory(cfg)));
    threads.emplace_back([a = agents.back().get()] { a->run(); });
  }
  for (int i = 0; i < 2; ++i) {
    const auto ep = f.silo(i).endpoint_id;
    ASSERT_TRUE(wait_until(
        [&] { return f.service().dispatch().status_of(ep) != EndpointStatus::kOffline; }, 5000));
  }
  ApiClient admin(base_of(*server), f.admin_token(), ClientTlsOptions{certs.cert.string(), true});
  const auto launched = admin.post("/api/v1/experiments", to_json(f.config(Algorithm::kFedAvgM, 2)));
  const auto id = launched.at("config").at("experiment_id").get<std::string>();
  std::size_t from = 0;
  std::string status;
  for (int i = 0; i < 200 && status != "finished" && status != "failed"; ++i) {
    const auto chunk = admin.get("/api/v1/experiments/" + id + "/logs?from=" +
                                 std::to_string(from) + "&wait=2");
    from = chunk.at("next_line").get<std::size_t>();
    status = chunk.at("status").get<std::string>();
  }
  EXPECT_EQ(status, "finished");
  const auto rec = admin.get("/api/v1/experiments/" + id + "?include_log=1");
  EXPECT_EQ(rec.at("rounds").size(), 2u);
  EXPECT_EQ(rec.at("log_lines").get<std::size_t>(), from);
  EXPECT_EQ(rec.at("log").size(), from);
  for (auto& a : agents) a->stop();
  for (auto& t : threads) t.join();
}

TEST(ApiServerHttp, AgentSurvivesServerRestart) {
  Federation f;
  auto& s = f.register_silo("phoenix");
  ApiServer server(f.service(), plain_options());
  server.start();
  AgentConfig cfg;
  cfg.server_url = base_of(server);
  cfg.endpoint_id = s.endpoint_id;
  cfg.agent_token = s.agent_token;
  cfg.poll_wait_ms = 1000;
  cfg.backoff_min_ms = 100;
  cfg.backoff_max_ms = 400;
  Agent agent(cfg, synthetic_dataset(f.dir() / "p", 60, 5), http_transport_factory(cfg));
  std::thread t([&] { agent.run(); });
  ASSERT_TRUE(wait_until([&] { return agent.stats().heartbeats > 0; }, 5000));

  server.stop();
  TaskEnvelope env;
  env.task_id = "task_during_outage";
  env.experiment_id = "exp_x";
  env.kind = TaskKind::kDataHistogram;
  env.deadline = SystemClock().now_ms() + 60'000;
  f.service().dispatch().enqueue_task(s.endpoint_id, f.federation_id(), env);
  std::this_thread::sleep_for(std::chrono::milliseconds(1500));
  EXPECT_GT(agent.stats().network_errors, 0);
  server.start();
  EXPECT_TRUE(wait_until([&] { return agent.stats().tasks_completed == 1; }, 10'000));
  agent.stop();
  t.join();
}

}  // namespace
}  // namespace fedsilo
