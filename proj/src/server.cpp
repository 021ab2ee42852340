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

#include "fedsilo/server.hpp"

#include <httplib.h>

#include <sstream>

#include "fedsilo/error.hpp"
#include "fedsilo/experiment.hpp"
#include "fedsilo/wire.hpp"

namespace fedsilo {

namespace fs = std::filesystem;
using nlohmann::json;

Service::Service(Options options, const Clock& clock) {
  fs::create_directories(options.data_dir);
  iam_ = std::make_unique<IdentityService>(clock, options.data_dir / "iam.json");
  blobs_ = std::make_unique<BlobStore>(options.data_dir / "blobs");
  dispatch_ = std::make_unique<Dispatch>(*iam_, *blobs_, clock,
                                         options.data_dir / "endpoints.json", options.dispatch);
  store_ = std::make_unique<ExperimentStore>(options.data_dir);
  orchestrator_ = std::make_unique<Orchestrator>(*iam_, *dispatch_, *store_, clock,
                                                 options.orchestrator);
}

Service::~Service() {
  orchestrator_->shutdown();
  dispatch_->wake_all();
}

namespace {

const std::string kApi = "/api/v1";
const std::string kId = "([^/]+)";

const char* kIndexHtml = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>fedsilo</title></head>
<body>
<h1>fedsilo</h1>
<p>The dashboard bundle is not installed. Start the server with
<code>--static-dir</code> pointing at a built dashboard, or use the
<code>fedsilo</code> CLI. The REST API lives under <code>/api/v1</code>.</p>
</body></html>
)";

std::string bearer(const httplib::Request& req) {
  const auto h = req.get_header_value("Authorization");
  if (!h.starts_with("Bearer ") || h.size() <= 7) {
    throw Error(ErrorCode::kUnauthorized, "missing bearer token");
  }
  return h.substr(7);
}

// The token is checked before anything else so a bad one is always a 401.
std::string authed(IdentityService& iam, const httplib::Request& req) {
  auto token = bearer(req);
  iam.authenticate(token);
  return token;
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kInvalidArgument, "request body is not valid JSON");
  return j;
}

std::string required_string(const json& body, const char* key) {
  if (!body.is_object() || !body.contains(key) || !body.at(key).is_string()) {
    throw Error(ErrorCode::kInvalidArgument, std::string("field '") + key + "' is required",
                {{key, "must be a string"}});
  }
  return body.at(key).get<std::string>();
}

std::string query(const httplib::Request& req, const char* key, const std::string& fallback = "") {
  return req.has_param(key) ? req.get_param_value(key) : fallback;
}

double query_number(const httplib::Request& req, const char* key, double fallback) {
  if (!req.has_param(key)) return fallback;
  try {
    return std::stod(req.get_param_value(key));
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, std::string("query parameter '") + key +
                                                 "' must be a number");
  }
}

void send_json(httplib::Response& res, const json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message,
                const std::map<std::string, std::string>& fields = {}) {
  send_json(res,
            {{"error", error_code_name(code)}, {"message", message}, {"fields", fields}},
            http_status_for(code));
}

json membership_json(IdentityService& iam, const Membership& m) {
  json j = {{"account_id", m.account_id},
            {"role", m.role == Role::kAdmin ? "admin" : "member"},
            {"status", m.status == MembershipStatus::kActive ? "active" : "invited"}};
  try {
    const auto a = iam.account_info(m.account_id);
    j["email"] = a.email;
    j["display_name"] = a.display_name;
  } catch (const Error&) {
  }
  return j;
}

json federation_json(IdentityService& iam, const Federation& f) {
  json members = json::array();
  for (const auto& m : f.members) members.push_back(membership_json(iam, m));
  return {{"federation_id", f.federation_id},
          {"name", f.name},
          {"admin_id", f.admin_id},
          {"created_at", f.created_at},
          {"members", members}};
}

json endpoint_json(const EndpointRecord& r) {
  json j;
  to_json(j, r);
  return j;
}

json summary_json(const ExperimentRecord& r) {
  json j = {{"experiment_id", r.config.experiment_id},
            {"name", r.config.name},
            {"federation_id", r.config.federation_id},
            {"algorithm", algorithm_name(r.config.algorithm)},
            {"status", experiment_status_name(r.status)},
            {"rounds_planned", r.config.rounds},
            {"rounds_completed", r.rounds.size()},
            {"created_at", r.created_at}};
  if (!r.rounds.empty() && r.rounds.back().global_val_accuracy) {
    j["latest_global_val_accuracy"] = *r.rounds.back().global_val_accuracy;
  }
  return j;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool is_loopback(const std::string& addr) {
  return addr == "127.0.0.1" || addr == "::1" || addr == "localhost" ||
         addr.starts_with("127.");
}

}  // namespace

const std::vector<RouteInfo>& api_routes() {
  static const std::vector<RouteInfo> routes{
      {"POST", "/api/v1/auth/accounts", false},
      {"POST", "/api/v1/auth/login", false},
      {"POST", "/api/v1/auth/logout", true},
      {"GET", "/api/v1/auth/me", true},
      {"POST", "/api/v1/federations", true},
      {"GET", "/api/v1/federations", true},
      {"GET", "/api/v1/federations/fed_x", true},
      {"POST", "/api/v1/federations/fed_x/invitations", true},
      {"POST", "/api/v1/federations/fed_x/accept", true},
      {"DELETE", "/api/v1/federations/fed_x/members/acct_x", true},
      {"POST", "/api/v1/federations/fed_x/distribution", true},
      {"GET", "/api/v1/federations/fed_x/experiments", true},
      {"GET", "/api/v1/invitations", true},
      {"POST", "/api/v1/endpoints", true},
      {"GET", "/api/v1/endpoints?federation_id=fed_x", true},
      {"GET", "/api/v1/endpoints/ep_x", true},
      {"GET", "/api/v1/endpoints/ep_x/tasks?wait=0", true},
      {"POST", "/api/v1/endpoints/ep_x/heartbeat", true},
      {"POST", "/api/v1/tasks/task_x/result", true},
      {"PUT", "/api/v1/blobs?federation_id=fed_x", true},
      {"GET", "/api/v1/blobs/" + std::string(64, '0'), true},
      {"POST", "/api/v1/experiments", true},
      {"GET", "/api/v1/experiments?federation_id=fed_x", true},
      {"GET", "/api/v1/experiments/compare?ids=exp_a,exp_b", true},
      {"GET", "/api/v1/experiments/exp_x", true},
      {"GET", "/api/v1/experiments/exp_x/logs?from=0&wait=0", true},
      {"GET", "/api/v1/experiments/exp_x/report", true},
      {"POST", "/api/v1/experiments/exp_x/cancel", true},
  };
  return routes;
}

struct ApiServer::Impl {
  std::unique_ptr<httplib::Server> server;
  std::atomic<bool> stopping{false};
};

ApiServer::ApiServer(Service& service, ServerOptions options)
    : service_(service), options_(std::move(options)), impl_(std::make_unique<Impl>()) {
  if (options_.tls_cert.has_value() != options_.tls_key.has_value()) {
    throw Error(ErrorCode::kInvalidConfig, "TLS needs both a certificate and a key",
                {{"tls", "pass both --tls-cert and --tls-key"}});
  }
  if (!options_.tls_cert) {
    if (!options_.insecure_http) {
      throw Error(ErrorCode::kInvalidConfig,
                  "refusing to serve plain HTTP; pass --tls-cert/--tls-key, or "
                  "--insecure-http on a loopback address for local testing",
                  {{"tls", "required"}});
    }
    if (!is_loopback(options_.bind_address)) {
      throw Error(ErrorCode::kInvalidConfig, "plain HTTP is only allowed on loopback addresses",
                  {{"bind", "must be 127.0.0.1 or ::1 with --insecure-http"}});
    }
  }
}

ApiServer::~ApiServer() { stop(); }

void ApiServer::start() {
  if (thread_.joinable()) return;
  impl_->stopping = false;
  if (options_.tls_cert) {
    impl_->server = std::make_unique<httplib::SSLServer>(options_.tls_cert->c_str(),
                                                         options_.tls_key->c_str());
  } else {
    impl_->server = std::make_unique<httplib::Server>();
  }
  auto& svr = *impl_->server;
  if (!svr.is_valid()) {
    throw Error(ErrorCode::kIoError, "cannot load TLS certificate or key");
  }
  const int threads = options_.worker_threads;
  svr.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  svr.set_keep_alive_max_count(1000);
  svr.set_read_timeout(60, 0);
  svr.set_write_timeout(60, 0);


  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;
  const auto wrap = [](Handler fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, e.code(), e.what(), e.fields());
      } catch (const json::exception& e) {
        send_error(res, ErrorCode::kInvalidArgument, std::string("malformed request: ") + e.what());
      } catch (const std::exception& e) {
        send_error(res, ErrorCode::kInternal, e.what());
      }
    };
  };

  // ---- auth ----
  svr.Post(kApi + "/auth/accounts", wrap([this](const auto& req, auto& res) {
             const auto body = body_of(req);
             const auto a = service_.iam().create_account(required_string(body, "display_name"),
                                               required_string(body, "email"),
                                               required_string(body, "password"));
             send_json(res,
                       {{"account_id", a.account_id},
                        {"display_name", a.display_name},
                        {"email", a.email}},
                       201);
           }));
  svr.Post(kApi + "/auth/login", wrap([this](const auto& req, auto& res) {
             const auto body = body_of(req);
             const auto t =
                 service_.iam().login(required_string(body, "email"), required_string(body, "password"));
             send_json(res, {{"token", t.token},
                             {"account_id", t.account_id},
                             {"expires_at", t.expires_at}});
           }));
  svr.Post(kApi + "/auth/logout", wrap([this](const auto& req, auto& res) {
             const auto token = authed(service_.iam(), req);
             service_.iam().revoke(token);
             send_json(res, {{"ok", true}});
           }));
  svr.Get(kApi + "/auth/me", wrap([this](const auto& req, auto& res) {
            const auto p = service_.iam().authenticate(bearer(req));
            json scopes = json::array();
            for (auto s : p.scopes) scopes.push_back(s == Scope::kApi ? "api" : "agent");
            json j = {{"account_id", p.account_id}, {"scopes", scopes}};
            if (p.endpoint_id) j["endpoint_id"] = *p.endpoint_id;
            const auto a = service_.iam().account_info(p.account_id);
            j["email"] = a.email;
            j["display_name"] = a.display_name;
            send_json(res, j);
          }));

  // ---- federations ----
  svr.Post(kApi + "/federations", wrap([this](const auto& req, auto& res) {
             const auto token = authed(service_.iam(), req);
             const auto body = body_of(req);
             send_json(res,
                       federation_json(service_.iam(), service_.iam().create_federation(token, required_string(body, "name"))),
                       201);
           }));
  svr.Get(kApi + "/federations", wrap([this](const auto& req, auto& res) {
            json out = json::array();
            for (const auto& f : service_.iam().list_federations(bearer(req))) {
              out.push_back(federation_json(service_.iam(), f));
            }
            send_json(res, {{"federations", out}});
          }));
  svr.Get(kApi + "/invitations", wrap([this](const auto& req, auto& res) {
            json out = json::array();
            for (const auto& f : service_.iam().pending_invitations(bearer(req))) {
              out.push_back({{"federation_id", f.federation_id},
                             {"name", f.name},
                             {"admin_id", f.admin_id}});
            }
            send_json(res, {{"invitations", out}});
          }));
  svr.Get(kApi + "/federations/" + kId, wrap([this](const auto& req, auto& res) {
            const auto token = authed(service_.iam(), req);
            send_json(res, federation_json(service_.iam(), service_.iam().get_federation(token, req.matches[1])));
          }));
  svr.Post(kApi + "/federations/" + kId + "/invitations", wrap([this](const auto& req, auto& res) {
             const auto token = authed(service_.iam(), req);
             const auto body = body_of(req);
             const auto m = service_.iam().invite_member(token, req.matches[1], required_string(body, "email"));
             send_json(res, membership_json(service_.iam(), m), 201);
           }));
  svr.Post(kApi + "/federations/" + kId + "/accept", wrap([this](const auto& req, auto& res) {
             const auto token = authed(service_.iam(), req);
             send_json(res, membership_json(service_.iam(), service_.iam().accept_invitation(token, req.matches[1])));
           }));
  svr.Delete(kApi + "/federations/" + kId + "/members/" + kId,
             wrap([this](const auto& req, auto& res) {
               const auto token = authed(service_.iam(), req);
               service_.iam().remove_member(token, req.matches[1], req.matches[2]);
               send_json(res, {{"ok", true}});
             }));
  svr.Post(kApi + "/federations/" + kId + "/distribution", wrap([this](const auto& req, auto& res) {
             const auto token = authed(service_.iam(), req);
             const auto body = body_of(req);
             std::vector<std::string> roster;
             if (body.contains("roster")) body.at("roster").get_to(roster);
             const double timeout_s = body.value("timeout_s", 60.0);
             const auto fed = std::string(req.matches[1]);
             if (roster.empty()) {
               for (const auto& e : service_.dispatch().list_endpoints(token, fed)) {
                 if (e.status != EndpointStatus::kOffline) roster.push_back(e.endpoint_id);
               }
             }
             const auto dist = service_.orchestrator().collect_data_distribution(
                 token, fed, roster, static_cast<std::int64_t>(timeout_s * 1000));
             json out = json::object();
             for (const auto& [ep, d] : dist) {
               std::int64_t total = 0;
               for (auto c : d.counts) total += c;
               out[ep] = {{"counts", d.counts}, {"total", total}, {"empty", d.empty}};
             }
             send_json(res, {{"histograms", out}});
           }));
  svr.Get(kApi + "/federations/" + kId + "/experiments", wrap([this](const auto& req, auto& res) {
            const auto token = authed(service_.iam(), req);
            json out = json::array();
            for (const auto& r : service_.orchestrator().list(token, req.matches[1])) out.push_back(summary_json(r));
            send_json(res, {{"experiments", out}});
          }));

  // ---- endpoints and tasks ----
  svr.Post(kApi + "/endpoints", wrap([this](const auto& req, auto& res) {
             const auto token = authed(service_.iam(), req);
             const auto body = body_of(req);
             const auto device = device_type_from_name(body.value("device_type", "cpu"));
             auto [rec, agent_token] = service_.dispatch().register_endpoint(
                 token, required_string(body, "federation_id"), required_string(body, "name"),
                 device);
             send_json(res, {{"endpoint", endpoint_json(rec)}, {"agent_token", agent_token}}, 201);
           }));
  svr.Get(kApi + "/endpoints", wrap([this](const auto& req, auto& res) {
            const auto token = authed(service_.iam(), req);
            const auto fed = query(req, "federation_id");
            if (fed.empty()) {
              throw Error(ErrorCode::kInvalidArgument, "federation_id query parameter is required");
            }
            json out = json::array();
            for (const auto& e : service_.dispatch().list_endpoints(token, fed)) out.push_back(endpoint_json(e));
            send_json(res, {{"endpoints", out}, {"heartbeat_interval_s", 5}});
          }));
  svr.Get(kApi + "/endpoints/" + kId, wrap([this](const auto& req, auto& res) {
            const auto token = authed(service_.iam(), req);
            service_.iam().authenticate(token);
            const auto rec = service_.dispatch().endpoint(req.matches[1]);
            for (const auto& e : service_.dispatch().list_endpoints(token, rec.federation_id)) {
              if (e.endpoint_id == rec.endpoint_id) return send_json(res, endpoint_json(e));
            }
            throw Error(ErrorCode::kUnknownEndpoint, "unknown endpoint");
          }));
  svr.Get(kApi + "/endpoints/" + kId + "/tasks", wrap([this](const auto& req, auto& res) {
            const auto token = authed(service_.iam(), req);
            if (impl_->stopping) throw Error(ErrorCode::kUnavailable, "server is stopping");
            const auto wait_ms = std::clamp<std::int64_t>(
                static_cast<std::int64_t>(query_number(req, "wait", 0.0) * 1000), 0, options_.max_poll_wait_ms);
            const auto max_tasks = static_cast<std::size_t>(query_number(req, "max", 0.0));
            const auto tasks = service_.dispatch().poll_tasks(token, req.matches[1], wait_ms, max_tasks);
            json out = json::array();
            for (const auto& t : tasks) {
              json j;
              to_json(j, t);
              out.push_back(j);
            }
            send_json(res, {{"tasks", out}});
          }));
  svr.Post(kApi + "/endpoints/" + kId + "/heartbeat", wrap([this](const auto& req, auto& res) {
             const auto token = authed(service_.iam(), req);
             ResourceMetrics m;
             from_json(body_of(req), m);
             service_.dispatch().heartbeat(token, req.matches[1], m);
             send_json(res, {{"ok", true}});
           }));
  svr.Post(kApi + "/tasks/" + kId + "/result", wrap([this](const auto& req, auto& res) {
             const auto token = authed(service_.iam(), req);
             auto body = body_of(req);
             if (!body.is_object()) throw Error(ErrorCode::kInvalidArgument, "result must be an object");
             body["task_id"] = std::string(req.matches[1]);
             TaskResult r;
             from_json(body, r);
             service_.dispatch().submit_result(token, r);
             send_json(res, {{"ok", true}});
           }));
  svr.Put(kApi + "/blobs", wrap([this](const auto& req, auto& res) {
            const auto token = authed(service_.iam(), req);
            const std::span<const std::uint8_t> bytes(
                reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size());
            const auto fed = query(req, "federation_id");
            const auto d =
                service_.dispatch().blob_put(token, bytes, fed.empty() ? std::nullopt : std::optional(fed));
            json j;
            to_json(j, d);
            send_json(res, j, 201);
          }));
  svr.Get(kApi + "/blobs/" + kId, wrap([this](const auto& req, auto& res) {
            const auto token = authed(service_.iam(), req);
            const auto bytes = service_.dispatch().blob_get(token, req.matches[1]);
            res.set_content(std::string(bytes.begin(), bytes.end()), "application/octet-stream");
          }));

  // ---- experiments ----
  svr.Post(kApi + "/experiments", wrap([this](const auto& req, auto& res) {
             const auto token = authed(service_.iam(), req);
             const auto body = json::parse(req.body, nullptr, false);
             if (body.is_discarded()) {
               throw Error(ErrorCode::kInvalidConfig, "experiment config is not valid JSON");
             }
             const auto rec = service_.orchestrator().launch(token, parse_experiment_config(body));
             send_json(res, to_json(rec, false), 201);
           }));
  svr.Get(kApi + "/experiments", wrap([this](const auto& req, auto& res) {
            const auto token = authed(service_.iam(), req);
            const auto fed = query(req, "federation_id");
            if (fed.empty()) {
              throw Error(ErrorCode::kInvalidArgument, "federation_id query parameter is required");
            }
            json out = json::array();
            for (const auto& r : service_.orchestrator().list(token, fed)) out.push_back(summary_json(r));
            send_json(res, {{"experiments", out}});
          }));
  svr.Get(kApi + "/experiments/compare", wrap([this](const auto& req, auto& res) {
            const auto token = authed(service_.iam(), req);
            send_json(res, service_.orchestrator().compare(token, split_csv(query(req, "ids"))));
          }));
  svr.Get(kApi + "/experiments/" + kId, wrap([this](const auto& req, auto& res) {
            const auto token = authed(service_.iam(), req);
            const bool with_log = query(req, "include_log") == "1";
            send_json(res, to_json(service_.orchestrator().get(token, req.matches[1]), with_log));
          }));
  svr.Get(kApi + "/experiments/" + kId + "/logs", wrap([this](const auto& req, auto& res) {
            const auto token = authed(service_.iam(), req);
            const auto from = static_cast<std::size_t>(query_number(req, "from", 0.0));
            const auto wait_ms = std::clamp<std::int64_t>(
                static_cast<std::int64_t>(query_number(req, "wait", 0.0) * 1000), 0, options_.max_poll_wait_ms);
            const auto chunk = service_.orchestrator().stream_logs(token, req.matches[1], from, wait_ms);
            json lines = json::array();
            for (std::size_t i = 0; i < chunk.lines.size(); ++i) {
              lines.push_back({{"line", from + i},
                               {"ts", chunk.lines[i].ts},
                               {"text", chunk.lines[i].text}});
            }
            send_json(res, {{"lines", lines},
                            {"next_line", chunk.next_line},
                            {"status", experiment_status_name(chunk.status)}});
          }));
  svr.Get(kApi + "/experiments/" + kId + "/report", wrap([this](const auto& req, auto& res) {
            const auto token = authed(service_.iam(), req);
            send_json(res, service_.orchestrator().report(token, req.matches[1]));
          }));
  svr.Post(kApi + "/experiments/" + kId + "/cancel", wrap([this](const auto& req, auto& res) {
             const auto token = authed(service_.iam(), req);
             service_.orchestrator().cancel(token, req.matches[1]);
             send_json(res, {{"ok", true}});
           }));

  // Unmatched API paths get a JSON 404; everything else is static content.
  svr.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (req.path.starts_with(kApi) && res.status == 404 && res.body.empty()) {
      send_error(res, ErrorCode::kInvalidArgument, "no such route: " + req.method + " " + req.path);
      res.status = 404;
    }
  });
  if (options_.static_dir && fs::is_directory(*options_.static_dir)) {
    svr.set_mount_point("/", options_.static_dir->string());
  } else {
    svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kIndexHtml, "text/html; charset=utf-8");
    });
  }

  // A restart keeps the port picked the first time.
  const int want = port_ > 0 ? port_ : options_.port;
  if (want == 0) {
    port_ = svr.bind_to_any_port(options_.bind_address);
    if (port_ <= 0) throw Error(ErrorCode::kIoError, "cannot bind " + options_.bind_address);
  } else {
    if (!svr.bind_to_port(options_.bind_address, want)) {
      throw Error(ErrorCode::kIoError,
                  "cannot bind " + options_.bind_address + ":" + std::to_string(want));
    }
    port_ = want;
  }
  thread_ = std::thread([&svr] { svr.listen_after_bind(); });
  svr.wait_until_ready();
}

void ApiServer::stop() {
  if (!thread_.joinable()) return;
  impl_->stopping = true;
  service_.dispatch().wake_all();
  impl_->server->stop();
  service_.dispatch().wake_all();
  thread_.join();
  impl_->server.reset();
}

}  // namespace fedsilo
