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

// fedsilo: server, agent and administrator front end. Every command other
// than `serve` and the `data` helpers is a plain client of the REST API.

#include <CLI11.hpp>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <pthread.h>
#include <sstream>
#include <thread>

#include "fedsilo/agent.hpp"
#include "fedsilo/api_client.hpp"
#include "fedsilo/dataset.hpp"
#include "fedsilo/error.hpp"
#include "fedsilo/experiment.hpp"
#include "fedsilo/fs_util.hpp"
#include "fedsilo/server.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fedsilo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitServer = 1;
constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

std::string now_stamp() {
  const auto t = std::time(nullptr);
  std::tm tm{};
  localtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%H:%M:%S");
  return os.str();
}

std::string fmt_time_ms(std::int64_t ms) {
  const std::time_t t = ms / 1000;
  std::tm tm{};
  localtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%d %H:%M:%S");
  return os.str();
}

// ---- profile ----

struct Profile {
  std::string server_url;
  std::string token;
  std::string default_federation_id;
  std::optional<std::string> ca_cert_file;
  bool tls_verify = true;
};

fs::path profile_path(const std::string& override_path) {
  if (!override_path.empty()) return override_path;
  if (const char* p = std::getenv("FEDSILO_PROFILE"); p && *p) return p;
  if (const char* x = std::getenv("XDG_CONFIG_HOME"); x && *x) {
    return fs::path(x) / "fedsilo" / "profile.json";
  }
  return fs::path(env_or("HOME", ".")) / ".config" / "fedsilo" / "profile.json";
}

Profile load_profile(const fs::path& path) {
  Profile p;
  if (!fs::exists(path)) return p;
  const auto j = json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::kInvalidConfig, "profile " + path.string() + " is not valid JSON");
  }
  p.server_url = j.value("server_url", "");
  p.token = j.value("token", "");
  p.default_federation_id = j.value("default_federation_id", "");
  if (j.contains("ca_cert_file") && j.at("ca_cert_file").is_string()) {
    p.ca_cert_file = j.at("ca_cert_file").get<std::string>();
  }
  p.tls_verify = j.value("tls_verify", true);
  return p;
}

void save_profile(const fs::path& path, const Profile& p) {
  json j = {{"server_url", p.server_url},
            {"token", p.token},
            {"default_federation_id", p.default_federation_id},
            {"tls_verify", p.tls_verify}};
  if (p.ca_cert_file) j["ca_cert_file"] = *p.ca_cert_file;
  write_file_atomic(path, j.dump(2) + "\n");
  fs::permissions(path, fs::perms::owner_read | fs::perms::owner_write);
}

// ---- shared command context ----

struct Globals {
  std::string server;
  std::string profile_file;
  std::string ca_cert;
  bool insecure_skip_verify = false;
  bool json_out = false;
  std::string federation;
};

class Context {
 public:
  explicit Context(const Globals& g) : g_(g), path_(profile_path(g.profile_file)) {
    profile_ = load_profile(path_);
  }

  std::string server_url() const {
    if (!g_.server.empty()) return g_.server;
    if (!profile_.server_url.empty()) return profile_.server_url;
    return "https://127.0.0.1:" + env_or("FEDSILO_PORT", "8443");
  }

  ClientTlsOptions tls() const {
    ClientTlsOptions t;
    if (!g_.ca_cert.empty()) {
      t.ca_cert_file = g_.ca_cert;
    } else {
      t.ca_cert_file = profile_.ca_cert_file;
    }
    t.verify = !g_.insecure_skip_verify && profile_.tls_verify;
    return t;
  }

  ApiClient client(bool need_token = true) const {
    if (need_token && profile_.token.empty()) {
      throw Error(ErrorCode::kInvalidConfig, "not logged in; run `fedsilo login` first");
    }
    return ApiClient(server_url(), need_token ? std::optional(profile_.token) : std::nullopt,
                     tls());
  }

  std::string federation() const {
    if (!g_.federation.empty()) return g_.federation;
    if (!profile_.default_federation_id.empty()) return profile_.default_federation_id;
    throw Error(ErrorCode::kInvalidArgument,
                "no federation selected; pass --fed or run `fedsilo fed use <id>`",
                {{"federation_id", "required"}});
  }

  Profile& profile() { return profile_; }
  void save() { save_profile(path_, profile_); }
  bool json_out() const { return g_.json_out; }

  void print(const json& j, const std::function<void()>& human) const {
    if (g_.json_out) {
      std::cout << j.dump(2) << "\n";
    } else {
      human();
    }
  }

 private:
  const Globals& g_;
  fs::path path_;
  Profile profile_;
};

json read_json_file(const std::string& path) {
  const auto text = read_text_file(path);
  auto j = json::parse(text, nullptr, false, /*ignore_comments=*/true);
  if (j.is_discarded()) {
    throw Error(ErrorCode::kInvalidConfig, path + " is not valid JSON", {{"file", path}});
  }
  return j;
}

// Blocks SIGINT/SIGTERM in every thread; one thread then waits for them.
sigset_t block_stop_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

std::string fmt_double(const json& j, int precision = 4) {
  if (!j.is_number()) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << j.get<double>();
  return os.str();
}

// ---- commands ----

int cmd_serve(const std::string& data_dir, const std::string& bind, int port,
              const std::string& cert, const std::string& key, bool insecure,
              const std::string& static_dir) {
  auto signals = block_stop_signals();
  SystemClock clock;
  Service::Options so;
  so.data_dir = data_dir;
  Service service(so, clock);
  ServerOptions opts;
  opts.bind_address = bind;
  opts.port = port;
  if (!cert.empty()) opts.tls_cert = cert;
  if (!key.empty()) opts.tls_key = key;
  opts.insecure_http = insecure;
  if (!static_dir.empty()) opts.static_dir = static_dir;
  ApiServer server(service, opts);
  server.start();
  std::cerr << now_stamp() << " fedsilo serving " << (server.tls() ? "https" : "http") << "://"
            << bind << ":" << server.port() << " (data in " << data_dir << ")" << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  std::cerr << now_stamp() << " shutting down" << std::endl;
  server.stop();
  service.orchestrator().shutdown();
  return kExitOk;
}

int cmd_account_create(Context& ctx, const std::string& name, const std::string& email,
                       const std::string& password) {
  auto client = ctx.client(false);
  const auto j = client.post("/api/v1/auth/accounts",
                             {{"display_name", name}, {"email", email}, {"password", password}});
  ctx.print(j, [&] { std::cout << "created account " << j.at("account_id").get<std::string>() << "\n"; });
  return kExitOk;
}

int cmd_login(Context& ctx, const std::string& email, const std::string& password) {
  auto client = ctx.client(false);
  const auto j = client.post("/api/v1/auth/login", {{"email", email}, {"password", password}});
  auto& p = ctx.profile();
  p.server_url = ctx.server_url();
  p.token = j.at("token").get<std::string>();
  const auto tls = ctx.tls();
  p.ca_cert_file = tls.ca_cert_file;
  p.tls_verify = tls.verify;
  ctx.save();
  // The token itself is never printed.
  const json out = {{"account_id", j.at("account_id")}, {"expires_at", j.at("expires_at")}};
  ctx.print(out, [&] {
    std::cout << "logged in as " << j.at("account_id").get<std::string>() << " (token valid until "
              << fmt_time_ms(j.at("expires_at").get<std::int64_t>()) << ")\n";
  });
  return kExitOk;
}

int cmd_logout(Context& ctx) {
  auto client = ctx.client();
  client.post("/api/v1/auth/logout");
  ctx.profile().token.clear();
  ctx.save();
  ctx.print({{"ok", true}}, [] { std::cout << "logged out\n"; });
  return kExitOk;
}

void print_members(const json& fed) {
  std::cout << fed.at("name").get<std::string>() << " (" << fed.at("federation_id").get<std::string>()
            << ")\n";
  for (const auto& m : fed.at("members")) {
    std::cout << "  " << std::left << std::setw(26) << m.value("email", "?") << std::setw(22)
              << m.at("account_id").get<std::string>() << std::setw(8)
              << m.at("role").get<std::string>() << m.at("status").get<std::string>() << "\n";
  }
}

int cmd_fed_create(Context& ctx, const std::string& name) {
  auto client = ctx.client();
  const auto j = client.post("/api/v1/federations", {{"name", name}});
  ctx.profile().default_federation_id = j.at("federation_id").get<std::string>();
  ctx.save();
  ctx.print(j, [&] {
    std::cout << "created federation " << j.at("federation_id").get<std::string>()
              << " (now the default)\n";
  });
  return kExitOk;
}

int cmd_fed_list(Context& ctx) {
  auto client = ctx.client();
  const auto j = client.get("/api/v1/federations");
  ctx.print(j, [&] {
    for (const auto& f : j.at("federations")) {
      const auto id = f.at("federation_id").get<std::string>();
      std::cout << (id == ctx.profile().default_federation_id ? "* " : "  ") << id << "  "
                << f.at("name").get<std::string>() << "  (" << f.at("members").size()
                << " members)\n";
    }
  });
  return kExitOk;
}

int cmd_fed_use(Context& ctx, const std::string& id) {
  auto client = ctx.client();
  client.get("/api/v1/federations/" + id);
  ctx.profile().default_federation_id = id;
  ctx.save();
  ctx.print({{"default_federation_id", id}}, [&] { std::cout << "default federation is " << id << "\n"; });
  return kExitOk;
}

int cmd_fed_invite(Context& ctx, const std::string& email) {
  auto client = ctx.client();
  const auto j = client.post("/api/v1/federations/" + ctx.federation() + "/invitations",
                             {{"email", email}});
  ctx.print(j, [&] { std::cout << "invited " << email << "\n"; });
  return kExitOk;
}

int cmd_fed_accept(Context& ctx, const std::string& id) {
  auto client = ctx.client();
  const auto j = client.post("/api/v1/federations/" + id + "/accept");
  if (ctx.profile().default_federation_id.empty()) {
    ctx.profile().default_federation_id = id;
    ctx.save();
  }
  ctx.print(j, [&] { std::cout << "joined federation " << id << "\n"; });
  return kExitOk;
}

int cmd_fed_members(Context& ctx) {
  auto client = ctx.client();
  const auto j = client.get("/api/v1/federations/" + ctx.federation());
  ctx.print(j, [&] { print_members(j); });
  return kExitOk;
}

int cmd_fed_invitations(Context& ctx) {
  auto client = ctx.client();
  const auto j = client.get("/api/v1/invitations");
  ctx.print(j, [&] {
    if (j.at("invitations").empty()) std::cout << "no pending invitations\n";
    for (const auto& i : j.at("invitations")) {
      std::cout << i.at("federation_id").get<std::string>() << "  "
                << i.at("name").get<std::string>() << "\n";
    }
  });
  return kExitOk;
}

int cmd_fed_remove(Context& ctx, const std::string& account_id) {
  auto client = ctx.client();
  const auto j = client.del("/api/v1/federations/" + ctx.federation() + "/members/" + account_id);
  ctx.print(j, [&] { std::cout << "removed " << account_id << "\n"; });
  return kExitOk;
}

int cmd_exp_launch(Context& ctx, const std::string& file) {
  auto j = read_json_file(file);
  if (j.is_object() && !j.contains("federation_id")) j["federation_id"] = ctx.federation();
  // Validate locally first so field errors exit 2 without a round trip.
  parse_experiment_config(j);
  auto client = ctx.client();
  const auto rec = client.post("/api/v1/experiments", j);
  ctx.print(rec, [&] { std::cout << rec.at("config").at("experiment_id").get<std::string>() << "\n"; });
  return kExitOk;
}

int cmd_exp_list(Context& ctx) {
  auto client = ctx.client();
  const auto j = client.get("/api/v1/experiments?federation_id=" + url_encode(ctx.federation()));
  ctx.print(j, [&] {
    for (const auto& e : j.at("experiments")) {
      std::cout << std::left << std::setw(22) << e.at("experiment_id").get<std::string>()
                << std::setw(20) << e.at("name").get<std::string>() << std::setw(11)
                << e.at("algorithm").get<std::string>() << std::setw(10)
                << e.at("status").get<std::string>() << e.at("rounds_completed").get<int>() << "/"
                << e.at("rounds_planned").get<int>() << "  "
                << fmt_double(e.value("latest_global_val_accuracy", json())) << "\n";
    }
  });
  return kExitOk;
}

int cmd_exp_status(Context& ctx, const std::string& id) {
  auto client = ctx.client();
  const auto j = client.get("/api/v1/experiments/" + id);
  ctx.print(j, [&] {
    const auto& c = j.at("config");
    std::cout << c.at("name").get<std::string>() << " (" << id << ")  "
              << c.at("algorithm").get<std::string>() << "  status "
              << j.at("status").get<std::string>() << "\n";
    if (j.contains("failure_reason") && j.at("failure_reason").is_string()) {
      std::cout << "failure: " << j.at("failure_reason").get<std::string>() << "\n";
    }
    std::cout << "round  global_val_acc  global_val_loss  wall_s\n";
    for (const auto& r : j.at("rounds")) {
      std::cout << std::setw(5) << r.at("round").get<int>() << "  " << std::setw(14)
                << fmt_double(r.value("global_val_accuracy", json())) << "  " << std::setw(15)
                << fmt_double(r.value("global_val_loss", json())) << "  "
                << fmt_double(static_cast<double>(r.at("finished_at").get<std::int64_t>() -
                                              r.at("started_at").get<std::int64_t>()) /
                                      1000.0,
                                  1) << "\n";
    }
  });
  return kExitOk;
}

int cmd_exp_logs(Context& ctx, const std::string& id, bool follow) {
  auto client = ctx.client();
  client.set_read_timeout_ms(45'000);
  std::size_t from = 0;
  for (;;) {
    const auto j = client.get("/api/v1/experiments/" + id + "/logs?from=" +
                              std::to_string(from) + "&wait=" + (follow ? "20" : "0"));
    for (const auto& l : j.at("lines")) {
      if (ctx.json_out()) {
        std::cout << l.dump() << "\n";
      } else {
        std::cout << fmt_time_ms(l.at("ts").get<std::int64_t>()) << "  "
                  << l.at("text").get<std::string>() << "\n";
      }
    }
    std::cout.flush();
    const auto next = j.at("next_line").get<std::size_t>();
    const auto status = j.at("status").get<std::string>();
    const bool terminal = status != "created" && status != "running";
    if (!follow || (terminal && next == from)) break;
    from = next;
  }
  return kExitOk;
}

int cmd_exp_report(Context& ctx, const std::string& id, const std::string& out) {
  auto client = ctx.client();
  const auto j = client.get("/api/v1/experiments/" + id + "/report");
  if (!out.empty()) {
    write_file_atomic(out, j.dump(2) + "\n");
    if (!ctx.json_out()) std::cout << "report written to " << out << "\n";
    return kExitOk;
  }
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_exp_compare(Context& ctx, const std::vector<std::string>& ids, const std::string& out) {
  if (ids.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "compare needs at least two experiment ids");
  }
  auto client = ctx.client();
  std::string joined;
  for (const auto& id : ids) joined += (joined.empty() ? "" : ",") + id;
  const auto j = client.get("/api/v1/experiments/compare?ids=" + url_encode(joined));
  std::ostringstream csv;
  csv << "round";
  for (const auto& s : j.at("series")) {
    csv << "," << s.at("experiment_id").get<std::string>() << "_val_accuracy";
  }
  csv << "\n";
  const auto& rounds = j.at("rounds");
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    csv << rounds[i].get<int>();
    for (const auto& s : j.at("series")) {
      const auto& acc = s.at("global_val_accuracy");
      csv << ",";
      if (i < acc.size() && acc[i].is_number()) csv << std::setprecision(6) << acc[i].get<double>();
    }
    csv << "\n";
  }
  const std::string prefix = out.empty() ? "compare-" + ids[0] + "-" + ids[1] : out;
  write_file_atomic(prefix + ".json", j.dump(2) + "\n");
  write_file_atomic(prefix + ".csv", csv.str());
  if (ctx.json_out()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << csv.str() << "wrote " << prefix << ".json and " << prefix << ".csv\n";
  }
  return kExitOk;
}

int cmd_exp_cancel(Context& ctx, const std::string& id) {
  auto client = ctx.client();
  const auto j = client.post("/api/v1/experiments/" + id + "/cancel");
  ctx.print(j, [&] { std::cout << "cancelled " << id << "\n"; });
  return kExitOk;
}

int cmd_exp_distribution(Context& ctx, double timeout_s) {
  auto client = ctx.client();
  client.set_read_timeout_ms(static_cast<std::int64_t>(timeout_s * 1000) + 15'000);
  const auto j = client.post("/api/v1/federations/" + ctx.federation() + "/distribution",
                             {{"timeout_s", timeout_s}});
  ctx.print(j, [&] {
    for (const auto& [ep, h] : j.at("histograms").items()) {
      std::cout << ep << "  total " << h.at("total").get<std::int64_t>() << "  [";
      bool first = true;
      for (const auto& c : h.at("counts")) {
        std::cout << (first ? "" : " ") << c.get<std::int64_t>();
        first = false;
      }
      std::cout << "]" << (h.at("empty").get<bool>() ? "  (no response)" : "") << "\n";
    }
  });
  return kExitOk;
}

void print_endpoints(const json& j) {
  std::cout << std::left << std::setw(22) << "ENDPOINT" << std::setw(16) << "NAME" << std::setw(9)
            << "STATUS" << std::setw(8) << "CPU%" << std::setw(16) << "MEM" << "NET tx/rx KB/s\n";
  for (const auto& e : j.at("endpoints")) {
    std::cout << std::setw(22) << e.at("endpoint_id").get<std::string>() << std::setw(16)
              << e.at("name").get<std::string>() << std::setw(9)
              << e.at("status").get<std::string>();
    if (e.contains("resources") && e.at("resources").is_object()) {
      const auto& r = e.at("resources");
      std::ostringstream mem;
      mem << r.at("mem_used_bytes").get<std::uint64_t>() / (1 << 20) << "/"
          << r.at("mem_total_bytes").get<std::uint64_t>() / (1 << 20) << "M";
      std::cout << std::setw(8) << fmt_double(r.at("cpu_percent"), 1) << std::setw(16) << mem.str()
                << fmt_double(r.at("net_tx_bytes_per_s").get<double>() / 1024.0, 1) << "/"
                << fmt_double(r.at("net_rx_bytes_per_s").get<double>() / 1024.0, 1);
    } else {
      std::cout << std::setw(8) << "-" << std::setw(16) << "-" << "-";
    }
    std::cout << "\n";
  }
}

int cmd_endpoints_list(Context& ctx) {
  auto client = ctx.client();
  const auto j = client.get("/api/v1/endpoints?federation_id=" + url_encode(ctx.federation()));
  ctx.print(j, [&] { print_endpoints(j); });
  return kExitOk;
}

int cmd_endpoints_watch(Context& ctx, double interval_s, int count) {
  auto client = ctx.client();
  for (int i = 0; count <= 0 || i < count; ++i) {
    if (i > 0) std::this_thread::sleep_for(std::chrono::duration<double>(interval_s));
    const auto j = client.get("/api/v1/endpoints?federation_id=" + url_encode(ctx.federation()));
    if (ctx.json_out()) {
      std::cout << j.dump() << "\n";
    } else {
      std::cout << "-- " << now_stamp() << "\n";
      print_endpoints(j);
    }
    std::cout.flush();
  }
  return kExitOk;
}

struct DataFlags {
  std::string images, labels, csv, normalization = "scale_0_1";
  double val_fraction = 0.1;
  std::uint64_t shuffle_seed = 0;
  double dp_epsilon = 0.0, dp_clip = 0.0;
};

int cmd_agent_register(Context& ctx, const std::string& name, const std::string& device,
                       const std::string& config_path, const DataFlags& d) {
  AgentConfig cfg;
  if (fs::exists(config_path)) cfg = load_agent_config(config_path);
  if (!d.images.empty() || !d.csv.empty()) {
    json data = {{"val_fraction", d.val_fraction},
                 {"shuffle_seed", d.shuffle_seed},
                 {"normalization", d.normalization}};
    if (!d.csv.empty()) {
      data["format"] = "csv";
      data["train_csv"] = fs::absolute(d.csv).string();
    } else {
      data["format"] = "mnist_idx";
      data["train_images"] = fs::absolute(d.images).string();
      data["train_labels"] = fs::absolute(d.labels).string();
    }
    cfg.data = parse_data_loader_spec(data);
  }
  if (d.dp_epsilon > 0) {
    cfg.privacy = parse_privacy_config(
        {{"mechanism", "laplace"}, {"epsilon", d.dp_epsilon}, {"clip_norm", d.dp_clip}});
  }
  auto client = ctx.client();
  const auto fed = ctx.federation();
  const auto j = client.post("/api/v1/endpoints",
                             {{"federation_id", fed}, {"name", name}, {"device_type", device}});
  cfg.server_url = ctx.server_url();
  cfg.endpoint_id = j.at("endpoint").at("endpoint_id").get<std::string>();
  cfg.agent_token = j.at("agent_token").get<std::string>();
  cfg.federation_id = fed;
  cfg.name = name;
  const auto tls = ctx.tls();
  cfg.ca_cert_file = tls.ca_cert_file;
  cfg.tls_verify = tls.verify;
  save_agent_config(config_path, cfg);
  ctx.print(j.at("endpoint"), [&] {
    std::cout << "registered endpoint " << cfg.endpoint_id << "; agent config written to "
              << config_path << "\n";
  });
  return kExitOk;
}

int cmd_agent_run(const std::string& config_path) {
  const auto cfg = load_agent_config(config_path);
  if (cfg.agent_token.empty() || cfg.endpoint_id.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "agent config has no credentials; run `agent register`",
                {{"agent_token", "required"}});
  }
  auto signals = block_stop_signals();
  Agent agent(cfg, http_transport_factory(cfg),
              [](const std::string& line) { std::cerr << now_stamp() << " " << line << std::endl; });
  std::thread([&agent, signals]() mutable {
    int sig = 0;
    sigwait(&signals, &sig);
    agent.stop();
  }).detach();
  agent.run();
  return kExitOk;
}

int cmd_data_synth(std::size_t count, std::uint64_t seed, double noise, const std::string& out_dir,
                   std::size_t parts) {
  fs::create_directories(out_dir);
  const auto s = make_synthetic_images(count, seed, noise);
  const auto images = fs::path(out_dir) / "train-images.idx";
  const auto labels = fs::path(out_dir) / "train-labels.idx";
  write_idx_images(images, s.images);
  write_idx_labels(labels, s.labels);
  std::cout << "wrote " << count << " samples to " << images.string() << "\n";
  if (parts > 0) {
    for (const auto& p : partition_idx(s.images, s.labels, parts, out_dir)) {
      std::cout << "  " << p.string() << "-images.idx\n";
    }
  }
  return kExitOk;
}

int cmd_data_partition(const std::string& images, const std::string& labels, std::size_t parts,
                       const std::string& out_dir) {
  const auto img = read_idx_images(images);
  const auto lab = read_idx_labels(labels);
  for (const auto& p : partition_idx(img, lab, parts, out_dir)) {
    std::cout << p.string() << "-images.idx\n";
  }
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kIoError:
    case ErrorCode::kParseError:
    case ErrorCode::kNetworkError:
    case ErrorCode::kLabelOutOfRange:
      return kExitIo;
    default:
      return kExitValidation;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedsilo: self-hosted cross-silo federated learning"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--server", g.server, "Server URL, e.g. https://host:8443");
  app.add_option("--profile", g.profile_file, "Profile file (default ~/.config/fedsilo/profile.json)");
  app.add_option("--ca-cert", g.ca_cert, "CA certificate used to verify the server");
  app.add_flag("--insecure-skip-verify", g.insecure_skip_verify, "Do not verify the server certificate");
  app.add_flag("--json", g.json_out, "Machine-readable output");
  app.add_option("--fed", g.federation, "Federation id (default: the profile's)");

  std::function<int()> action;

  // serve
  auto* serve = app.add_subcommand("serve", "Run the orchestrator and REST API");
  std::string data_dir = env_or("FEDSILO_DATA_DIR", "./fedsilo-data");
  std::string bind = "127.0.0.1", cert, key, static_dir;
  int port = std::stoi(env_or("FEDSILO_PORT", "8443"));
  bool insecure = false;
  serve->add_option("--data-dir", data_dir, "State directory")->capture_default_str();
  serve->add_option("--bind", bind, "Listen address")->capture_default_str();
  serve->add_option("--port", port, "Listen port")->capture_default_str();
  serve->add_option("--tls-cert", cert, "PEM certificate");
  serve->add_option("--tls-key", key, "PEM private key");
  serve->add_flag("--insecure-http", insecure, "Serve plain HTTP (loopback only)");
  serve->add_option("--static-dir", static_dir, "Dashboard bundle served at /");
  serve->callback([&] {
    action = [&] { return cmd_serve(data_dir, bind, port, cert, key, insecure, static_dir); };
  });

  Context* ctx_ptr = nullptr;
  auto ctx = [&]() -> Context& { return *ctx_ptr; };

  // account / login
  std::string name, email, password = env_or("FEDSILO_PASSWORD", "");
  auto* account = app.add_subcommand("account", "Account management")->require_subcommand(1);
  auto* acc_create = account->add_subcommand("create", "Create an account");
  acc_create->add_option("--name", name, "Display name")->required();
  acc_create->add_option("--email", email, "Email")->required();
  acc_create->add_option("--password", password, "Password (or FEDSILO_PASSWORD)");
  acc_create->callback([&] { action = [&] { return cmd_account_create(ctx(), name, email, password); }; });
  auto* login = app.add_subcommand("login", "Log in and store a token in the profile");
  login->add_option("--email", email, "Email")->required();
  login->add_option("--password", password, "Password (or FEDSILO_PASSWORD)");
  login->callback([&] { action = [&] { return cmd_login(ctx(), email, password); }; });
  app.add_subcommand("logout", "Revoke the profile token")->callback([&] {
    action = [&] { return cmd_logout(ctx()); };
  });

  // fed
  std::string arg;
  auto* fed = app.add_subcommand("fed", "Federations")->require_subcommand(1);
  auto* fed_create = fed->add_subcommand("create", "Create a federation");
  fed_create->add_option("name", arg)->required();
  fed_create->callback([&] { action = [&] { return cmd_fed_create(ctx(), arg); }; });
  fed->add_subcommand("list", "List federations")->callback([&] {
    action = [&] { return cmd_fed_list(ctx()); };
  });
  auto* fed_use = fed->add_subcommand("use", "Set the default federation");
  fed_use->add_option("federation_id", arg)->required();
  fed_use->callback([&] { action = [&] { return cmd_fed_use(ctx(), arg); }; });
  auto* fed_invite = fed->add_subcommand("invite", "Invite a member by email");
  fed_invite->add_option("email", arg)->required();
  fed_invite->callback([&] { action = [&] { return cmd_fed_invite(ctx(), arg); }; });
  auto* fed_accept = fed->add_subcommand("accept", "Accept an invitation");
  fed_accept->add_option("federation_id", arg)->required();
  fed_accept->callback([&] { action = [&] { return cmd_fed_accept(ctx(), arg); }; });
  fed->add_subcommand("members", "List members")->callback([&] {
    action = [&] { return cmd_fed_members(ctx()); };
  });
  fed->add_subcommand("invitations", "Pending invitations for you")->callback([&] {
    action = [&] { return cmd_fed_invitations(ctx()); };
  });
  auto* fed_remove = fed->add_subcommand("remove", "Remove a member");
  fed_remove->add_option("account_id", arg)->required();
  fed_remove->callback([&] { action = [&] { return cmd_fed_remove(ctx(), arg); }; });

  // exp
  std::string file, out;
  std::vector<std::string> ids;
  bool follow = false, print_template = false;
  double timeout_s = 60;
  auto* exp = app.add_subcommand("exp", "Experiments");
  exp->add_flag("--print-template", print_template, "Print an example experiment config");
  auto* exp_launch = exp->add_subcommand("launch", "Launch from a JSON config");
  exp_launch->add_option("-f,--file", file, "Config file")->required();
  exp_launch->callback([&] { action = [&] { return cmd_exp_launch(ctx(), file); }; });
  exp->add_subcommand("list", "List experiments")->callback([&] {
    action = [&] { return cmd_exp_list(ctx()); };
  });
  auto* exp_status = exp->add_subcommand("status", "Round table and status");
  exp_status->add_option("id", arg)->required();
  exp_status->callback([&] { action = [&] { return cmd_exp_status(ctx(), arg); }; });
  auto* exp_logs = exp->add_subcommand("logs", "Print the training log");
  exp_logs->add_option("id", arg)->required();
  exp_logs->add_flag("-f,--follow", follow, "Keep streaming until the run ends");
  exp_logs->callback([&] { action = [&] { return cmd_exp_logs(ctx(), arg, follow); }; });
  auto* exp_report = exp->add_subcommand("report", "Experiment report (JSON)");
  exp_report->add_option("id", arg)->required();
  exp_report->add_option("-o,--out", out, "Write to a file");
  exp_report->callback([&] { action = [&] { return cmd_exp_report(ctx(), arg, out); }; });
  auto* exp_compare = exp->add_subcommand("compare", "Compare accuracy series (JSON + CSV)");
  exp_compare->add_option("ids", ids)->required()->expected(2, -1);
  exp_compare->add_option("-o,--out", out, "Output prefix for .json and .csv");
  exp_compare->callback([&] { action = [&] { return cmd_exp_compare(ctx(), ids, out); }; });
  auto* exp_cancel = exp->add_subcommand("cancel", "Cancel a running experiment");
  exp_cancel->add_option("id", arg)->required();
  exp_cancel->callback([&] { action = [&] { return cmd_exp_cancel(ctx(), arg); }; });
  auto* exp_dist = exp->add_subcommand("distribution", "Label histograms of every endpoint");
  exp_dist->add_option("--timeout", timeout_s, "Seconds to wait for endpoints")->capture_default_str();
  exp_dist->callback([&] { action = [&] { return cmd_exp_distribution(ctx(), timeout_s); }; });
  exp->callback([&] {
    if (print_template) {
      action = [] {
        std::cout << experiment_config_template();
        return kExitOk;
      };
    } else if (!action) {
      throw CLI::CallForHelp();
    }
  });

  // endpoints
  double interval_s = 5;
  int count = 0;
  auto* eps = app.add_subcommand("endpoints", "Endpoint monitor")->require_subcommand(1);
  eps->add_subcommand("list", "List endpoints")->callback([&] {
    action = [&] { return cmd_endpoints_list(ctx()); };
  });
  auto* watch = eps->add_subcommand("watch", "Refresh the endpoint table");
  watch->add_option("--interval", interval_s, "Seconds between refreshes")->capture_default_str();
  watch->add_option("--count", count, "Stop after this many refreshes (0 = forever)");
  watch->callback([&] { action = [&] { return cmd_endpoints_watch(ctx(), interval_s, count); }; });

  // agent
  std::string device = "cpu", agent_config = "agent.json";
  DataFlags df;
  auto* agent = app.add_subcommand("agent", "Client agent")->require_subcommand(1);
  auto* reg = agent->add_subcommand("register", "Register this machine as an endpoint");
  reg->add_option("--name", name, "Endpoint name")->required();
  reg->add_option("--device", device, "cpu or gpu")->capture_default_str();
  reg->add_option("-c,--config", agent_config, "Agent config to write")->capture_default_str();
  reg->add_option("--images", df.images, "IDX images file");
  reg->add_option("--labels", df.labels, "IDX labels file");
  reg->add_option("--csv", df.csv, "CSV file with a label column");
  reg->add_option("--val-fraction", df.val_fraction)->capture_default_str();
  reg->add_option("--shuffle-seed", df.shuffle_seed)->capture_default_str();
  reg->add_option("--normalization", df.normalization)->capture_default_str();
  reg->add_option("--dp-epsilon", df.dp_epsilon, "Local Laplace privacy budget per round");
  reg->add_option("--dp-clip", df.dp_clip, "Local L2 clip bound");
  reg->callback([&] {
    action = [&] { return cmd_agent_register(ctx(), name, device, agent_config, df); };
  });
  auto* run = agent->add_subcommand("run", "Run the agent loop");
  run->add_option("-c,--config", agent_config, "Agent config")->capture_default_str();
  run->callback([&] { action = [&] { return cmd_agent_run(agent_config); }; });

  // data
  std::size_t samples = 6000, parts = 0;
  std::uint64_t seed = 1;
  double noise = 0.35;
  std::string out_dir = ".", images, labels;
  auto* data = app.add_subcommand("data", "Dataset helpers")->require_subcommand(1);
  auto* synth = data->add_subcommand("synth", "Write a synthetic 10-class IDX dataset");
  synth->add_option("--count", samples)->capture_default_str();
  synth->add_option("--seed", seed)->capture_default_str();
  synth->add_option("--noise", noise)->capture_default_str();
  synth->add_option("--out-dir", out_dir)->capture_default_str();
  synth->add_option("--parts", parts, "Also split into this many client shards");
  synth->callback([&] { action = [&] { return cmd_data_synth(samples, seed, noise, out_dir, parts); }; });
  auto* part = data->add_subcommand("partition", "Split an IDX pair into equal shards");
  part->add_option("--images", images)->required();
  part->add_option("--labels", labels)->required();
  part->add_option("--parts", parts)->required();
  part->add_option("--out-dir", out_dir)->capture_default_str();
  part->callback([&] { action = [&] { return cmd_data_partition(images, labels, parts, out_dir); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }
  if (!action) {
    std::cerr << app.help();
    return kExitValidation;
  }
  try {
    Context context(g);
    ctx_ptr = &context;
    return action();
  } catch (const ServerError& e) {
    std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    for (const auto& [f, why] : e.fields()) std::cerr << "  " << f << ": " << why << "\n";
    return kExitServer;
  } catch (const Error& e) {
    std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    for (const auto& [f, why] : e.fields()) std::cerr << "  " << f << ": " << why << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}
