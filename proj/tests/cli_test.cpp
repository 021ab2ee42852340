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

// Black-box checks of the fedsilo binary: exit codes, offline helpers and the
// profile file. Server-backed commands are covered by the acceptance run.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fedsilo/dataset.hpp"
#include "fedsilo/experiment.hpp"
#include "fedsilo/server.hpp"
#include "harness.hpp"

namespace fedsilo {
namespace {

using testing::TempDir;
namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  CliRun fedsilo(const std::string& args) {
    const auto out = dir.path() / "stdout", err = dir.path() / "stderr";
    const std::string cmd = "FEDSILO_PROFILE='" + (dir.path() / "profile.json").string() +
                            "' '" FEDSILO_BIN "' " + args + " >'" + out.string() + "' 2>'" +
                            err.string() + "'";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  fs::path write(const std::string& name, const std::string& text) {
    const auto p = dir.path() / name;
    std::ofstream(p) << text;
    return p;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  TempDir dir{"cli"};
};

TEST_F(Cli, TemplateIsCommentedJson) {
  const auto r = fedsilo("exp --print-template");
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out, nullptr, false, true);
  ASSERT_FALSE(j.is_discarded());
  EXPECT_EQ(j.at("rounds"), 10);
  EXPECT_EQ(j.at("algorithm"), "FedAvgM");
}

TEST_F(Cli, ValidationErrorsExitTwo) {
  const auto bad = write("bad.json", R"({"name": 3})");
  auto r = fedsilo("--fed fed_x exp launch -f '" + bad.string() + "'");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("InvalidConfig"), std::string::npos);
  EXPECT_NE(r.err.find("rounds: is required"), std::string::npos);

  const auto broken = write("broken.json", "{");
  EXPECT_EQ(fedsilo("--fed fed_x exp launch -f '" + broken.string() + "'").code, 2);
  EXPECT_EQ(fedsilo("frobnicate").code, 2);
  EXPECT_EQ(fedsilo("agent register --name x").code, 2);  // not logged in
}

TEST_F(Cli, IoAndNetworkErrorsExitThree) {
  EXPECT_EQ(fedsilo("--fed fed_x exp launch -f '" + (dir.path() / "none.json").string() + "'").code, 3);
  const auto r = fedsilo("--server https://127.0.0.1:1 login --email a@b.test --password long-password-1");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("NetworkError"), std::string::npos);
}

TEST_F(Cli, SynthWritesShards) {
  const auto out = dir.path() / "data";
  const auto r = fedsilo("data synth --count 100 --seed 3 --parts 4 --out-dir '" + out.string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto all = read_idx_labels(out / "train-labels.idx");
  EXPECT_EQ(all.size(), 100u);
  for (int i = 1; i <= 4; ++i) {
    const auto base = out / ("client" + std::to_string(i));
    EXPECT_EQ(read_idx_images(base.string() + "-images.idx").count, 25u);
    const auto labels = read_idx_labels(base.string() + "-labels.idx");
    EXPECT_TRUE(std::equal(labels.begin(), labels.end(), all.begin() + (i - 1) * 25));
  }
  // Same seed, same bytes.
  const auto again = dir.path() / "again";
  fedsilo("data synth --count 100 --seed 3 --out-dir '" + again.string() + "'");
  EXPECT_EQ(slurp(out / "train-images.idx"), slurp(again / "train-images.idx"));
}

TEST_F(Cli, LoginWritesOwnerOnlyProfileAndHidesToken) {
  testing::Federation f;
  ServerOptions o;
  o.port = 0;
  o.insecure_http = true;
  ApiServer server(f.service(), o);
  server.start();
  const auto base = "--server http://127.0.0.1:" + std::to_string(server.port()) + " ";
  const auto login = fedsilo(base + "login --email admin@silo.test --password admin-password-1");
  ASSERT_EQ(login.code, 0) << login.err;
  const auto profile = dir.path() / "profile.json";
  const auto stored = nlohmann::json::parse(slurp(profile));
  const auto token = stored.at("token").get<std::string>();
  ASSERT_FALSE(token.empty());
  EXPECT_EQ(login.out.find(token), std::string::npos);
  const auto perms = fs::status(profile).permissions();
  EXPECT_EQ(perms & (fs::perms::group_all | fs::perms::others_all), fs::perms::none);

  const auto use = fedsilo(base + "fed use " + f.federation_id());
  ASSERT_EQ(use.code, 0) << use.err;
  EXPECT_EQ(nlohmann::json::parse(slurp(profile)).at("default_federation_id"), f.federation_id());
  const auto missing = fedsilo(base + "fed use fed_nope");
  EXPECT_EQ(missing.code, 1);  // the server answered with an error
  const auto list = fedsilo(base + "--json fed list");
  ASSERT_EQ(list.code, 0);
  EXPECT_EQ(nlohmann::json::parse(list.out).at("federations").size(), 1u);
}

}  // namespace
}  // namespace fedsilo
