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

#include "fedsilo/agent.hpp"
#include "fedsilo/error.hpp"
#include "fedsilo/experiment.hpp"
#include "fedsilo/params.hpp"
#include "fedsilo/trainer.hpp"
#include "harness.hpp"

namespace fedsilo {
namespace {

using nlohmann::json;
using testing::Federation;
using testing::synthetic_dataset;
using testing::TempDir;
using testing::wait_until;

// Builds tasks against a registered endpoint and runs them through
// Agent::execute with the in-process transport.
class AgentExecute : public ::testing::Test {
 protected:
  void SetUp() override {
    silo = &f.register_silo("exec");
    data = synthetic_dataset(f.dir() / "x", 200, 77);
    spec.kind = ModelKind::kMlp;
    spec.input_shape = {784};
    spec.num_classes = 10;
    spec.hidden_sizes = {8};
    spec.init_seed = 5;
    model = init_model(spec);
    const auto bytes = serialize(model);
    digest = f.service().dispatch().put_internal(bytes, f.federation_id()).sha256;
    transport = direct_transport_factory(f.service().dispatch(), silo->agent_token,
                                         silo->endpoint_id)();
    AgentConfig cfg;
    cfg.endpoint_id = silo->endpoint_id;
    agent = std::make_unique<Agent>(cfg, data, direct_transport_factory(f.service().dispatch(),
                                                                         silo->agent_token,
                                                                         silo->endpoint_id));
  }

  TaskEnvelope train_task(const json& privacy) const {
    TaskEnvelope t;
    t.task_id = "task_train";
    t.kind = TaskKind::kTrain;
    t.model_blob = digest;
    t.config_payload = {{"model_spec", to_json(spec)}, {"loss", "cross_entropy"},
                        {"epochs", 1},  {"batch_size", 32},
                        {"lr", 0.05},   {"seed", 9},
                        {"privacy", privacy}, {"base_round", 0}};
    return t;
  }

  ParameterVector result_model(const TaskResult& r) {
    return deserialize(f.service().dispatch().get_internal(*r.result_blob));
  }

  Federation f;
  Federation::Silo* silo = nullptr;
  LocalDataset data;
  ModelSpec spec;
  ParameterVector model;
  std::string digest;
  std::unique_ptr<AgentTransport> transport;
  std::unique_ptr<Agent> agent;
};

TEST_F(AgentExecute, TrainWithoutPrivacyIsBitExact) {
  const auto r = agent->execute(train_task({{"mechanism", "none"}}), *transport);
  ASSERT_EQ(r.status, TaskStatus::kSuccess) << r.error_message.value_or("");
  TrainOptions o;
  o.epochs = 1;
  o.batch_size = 32;
  o.lr = 0.05;
  o.seed = 9;
  const auto expected = local_train(model, spec, data, o);
  EXPECT_TRUE(result_model(r).bit_equal(expected.weights));
  EXPECT_EQ(r.metrics.num_samples, static_cast<std::int64_t>(data.train_idx.size()));
  EXPECT_GT(r.wall_seconds, 0.0);
}

TEST_F(AgentExecute, TrainWithPrivacyClipsDelta) {
  // A huge budget makes the noise negligible, exposing the clip.
  const double clip = 0.05;
  const auto r = agent->execute(
      train_task({{"mechanism", "laplace"}, {"epsilon", 1e12}, {"clip_norm", clip},
                  {"noise_seed", 3}}),
      *transport);
  ASSERT_EQ(r.status, TaskStatus::kSuccess) << r.error_message.value_or("");
  const auto delta = subtract(result_model(r), model);
  EXPECT_LE(l2_norm(delta), clip * (1 + 1e-6));
  EXPECT_GT(l2_norm(delta), clip * 0.99);  // the raw update was larger than the bound
}

TEST_F(AgentExecute, LocalPrivacyOverridesTask) {
  AgentConfig cfg;
  cfg.endpoint_id = silo->endpoint_id;
  PrivacyConfig local;
  local.mechanism = PrivacyMechanism::kLaplace;
  local.epsilon = 1e12;
  local.clip_norm = 0.01;
  local.noise_seed = 1;
  cfg.privacy = local;
  Agent strict(cfg, data, {});
  const auto r = strict.execute(train_task({{"mechanism", "none"}}), *transport);
  ASSERT_EQ(r.status, TaskStatus::kSuccess);
  EXPECT_LE(l2_norm(subtract(result_model(r), model)), 0.01 * (1 + 1e-6));
}

TEST_F(AgentExecute, EvaluateAndHistogram) {
  TaskEnvelope ev;
  ev.task_id = "task_eval";
  ev.kind = TaskKind::kEvaluate;
  ev.model_blob = digest;
  ev.config_payload = {{"model_spec", to_json(spec)}, {"loss", "cross_entropy"}};
  const auto r = agent->execute(ev, *transport);
  ASSERT_EQ(r.status, TaskStatus::kSuccess);
  const auto direct = evaluate(model, spec, data, Split::kVal);
  EXPECT_EQ(r.metrics.accuracy, direct.accuracy);
  EXPECT_EQ(r.metrics.num_samples, static_cast<std::int64_t>(data.val_idx.size()));

  TaskEnvelope h;
  h.task_id = "task_hist";
  h.kind = TaskKind::kDataHistogram;
  const auto hr = agent->execute(h, *transport);
  ASSERT_EQ(hr.status, TaskStatus::kSuccess);
  const auto counts = hr.payload.at("histogram").get<std::vector<std::int64_t>>();
  EXPECT_EQ(counts, label_histogram(data));
}

TEST_F(AgentExecute, BadTasksFailWithMessage) {
  auto t = train_task({{"mechanism", "none"}});
  t.model_blob = std::string(64, 'f');
  auto r = agent->execute(t, *transport);
  EXPECT_EQ(r.status, TaskStatus::kFailure);
  EXPECT_TRUE(r.error_message.has_value());

  t = train_task({{"mechanism", "none"}});
  t.config_payload["model_spec"]["hidden_sizes"] = json::array({12});  // layout no longer matches the blob
  r = agent->execute(t, *transport);
  EXPECT_EQ(r.status, TaskStatus::kFailure);
  EXPECT_NE(r.error_message->find("LayoutMismatch"), std::string::npos);

}

TEST(AgentRun, RevokedTokenStopsWithUnauthorized) {
  Federation f;
  auto& s = f.register_silo("revoked");
  AgentConfig cfg;
  cfg.endpoint_id = s.endpoint_id;
  cfg.poll_wait_ms = 200;
  Agent agent(cfg, synthetic_dataset(f.dir() / "r", 30, 1),
              direct_transport_factory(f.service().dispatch(), s.agent_token, s.endpoint_id));
  std::atomic<bool> unauthorized{false};
  std::thread t([&] {
    try {
      agent.run();
    } catch (const Error& e) {
      unauthorized = e.code() == ErrorCode::kUnauthorized;
    }
  });
  ASSERT_TRUE(wait_until([&] { return agent.stats().heartbeats > 0; }, 5000));
  f.service().iam().revoke_endpoint_tokens(s.endpoint_id);
  t.join();
  EXPECT_TRUE(unauthorized);
  EXPECT_FALSE(agent.running());
}

TEST(AgentRun, HoldsOneTaskAtATime) {
  Federation f;
  auto& s = f.add_silo("serial", synthetic_dataset(f.dir() / "s", 30, 1));
  for (int i = 0; i < 3; ++i) {
    TaskEnvelope t;
    t.task_id = "task_" + std::to_string(i);
    t.kind = TaskKind::kDataHistogram;
    t.deadline = SystemClock().now_ms() + 60'000;
    f.service().dispatch().enqueue_task(s.endpoint_id, f.federation_id(), t);
  }
  ASSERT_TRUE(wait_until([&] { return s.agent->stats().tasks_completed == 3; }, 10'000));
  // Each poll asks for a single task, so at most one is ever in flight.
  EXPECT_LE(f.service().dispatch().in_flight_count(), 1u);
}

TEST(AgentConfigFile, RoundTripAndOwnerOnly) {
  TempDir dir("agentcfg");
  AgentConfig c;
  c.server_url = "https://127.0.0.1:8443";
  c.endpoint_id = "ep_1";
  c.agent_token = "secret";
  c.name = "desk-agent";
  DataLoaderSpec d;
  d.format = DataFormat::kCsv;
  d.train_csv = "/data/train.csv";
  c.data = d;
  PrivacyConfig p;
  p.mechanism = PrivacyMechanism::kLaplace;
  p.epsilon = 2;
  p.clip_norm = 1;
  c.privacy = p;
  const auto path = dir.path() / "agent.json";
  save_agent_config(path, c);
  const auto back = load_agent_config(path);
  EXPECT_EQ(to_json(back), to_json(c));
  const auto perms = std::filesystem::status(path).permissions();
  EXPECT_EQ(perms & (std::filesystem::perms::group_all | std::filesystem::perms::others_all),
            std::filesystem::perms::none);

  EXPECT_THROW(parse_agent_config(json{{"endpoint_id", 3}}), Error);
}

TEST(ResourceSamplerTest, MetricsAreValid) {
  ResourceSampler s;
  const auto a = s.sample(1000);
  EXPECT_NO_THROW(a.validate());
  EXPECT_GT(a.mem_total_bytes, 0u);
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  const auto b = s.sample(1050);
  EXPECT_NO_THROW(b.validate());
  EXPECT_FALSE(b.gpu_percent.has_value());
}

}  // namespace
}  // namespace fedsilo
