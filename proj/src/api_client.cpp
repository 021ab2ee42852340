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

#include "fedsilo/api_client.hpp"

#include <httplib.h>

namespace fedsilo {

using nlohmann::json;

struct ApiClient::Impl {
  explicit Impl(const std::string& url) : client(url) {}
  httplib::Client client;
  httplib::Headers headers;
};

ApiClient::ApiClient(const std::string& base_url, std::optional<std::string> token,
                     ClientTlsOptions tls)
    : base_url_(base_url) {
  if (!base_url.starts_with("http://") && !base_url.starts_with("https://")) {
    throw Error(ErrorCode::kInvalidArgument,
                "server url must start with http:// or https://: " + base_url);
  }
  impl_ = std::make_unique<Impl>(base_url);
  if (!impl_->client.is_valid()) {
    throw Error(ErrorCode::kInvalidArgument, "invalid server url " + base_url);
  }
  impl_->client.set_connection_timeout(5, 0);
  impl_->client.set_read_timeout(60, 0);
  impl_->client.set_write_timeout(60, 0);
  if (base_url.starts_with("https://")) {
    if (tls.ca_cert_file) impl_->client.set_ca_cert_path(*tls.ca_cert_file);
    impl_->client.enable_server_certificate_verification(tls.verify);
  }
  set_token(std::move(token));
}

ApiClient::~ApiClient() = default;

void ApiClient::set_token(std::optional<std::string> token) {
  impl_->headers.clear();
  if (token) impl_->headers.emplace("Authorization", "Bearer " + *token);
}

void ApiClient::set_read_timeout_ms(std::int64_t ms) {
  impl_->client.set_read_timeout(std::chrono::milliseconds(ms));
}

namespace {

[[noreturn]] void raise_network(const std::string& what, httplib::Error err) {
  throw Error(ErrorCode::kNetworkError, what + ": " + httplib::to_string(err));
}

void check_status(const httplib::Result& res, const std::string& what) {
  if (!res) raise_network(what, res.error());
  if (res->status >= 200 && res->status < 300) return;
  const auto body = json::parse(res->body, nullptr, false);
  ErrorCode code = ErrorCode::kInternal;
  std::string message = "HTTP " + std::to_string(res->status);
  std::map<std::string, std::string> fields;
  if (body.is_object() && body.contains("error")) {
    if (const auto c = error_code_from_name(body.at("error").get<std::string>())) code = *c;
    if (body.contains("message")) message = body.at("message").get<std::string>();
    if (body.contains("fields") && body.at("fields").is_object()) {
      for (const auto& [k, v] : body.at("fields").items()) fields[k] = v.get<std::string>();
    }
  }
  throw ServerError(code, message, res->status, std::move(fields));
}

json body_json(const httplib::Result& res) {
  if (res->body.empty()) return json::object();
  return json::parse(res->body);
}

}  // namespace

json ApiClient::get(const std::string& path) {
  auto res = impl_->client.Get(path, impl_->headers);
  check_status(res, "GET " + path);
  return body_json(res);
}

json ApiClient::post(const std::string& path, const json& body) {
  auto res = impl_->client.Post(path, impl_->headers, body.dump(), "application/json");
  check_status(res, "POST " + path);
  return body_json(res);
}

json ApiClient::del(const std::string& path) {
  auto res = impl_->client.Delete(path, impl_->headers);
  check_status(res, "DELETE " + path);
  return body_json(res);
}

json ApiClient::put_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  auto res = impl_->client.Put(path, impl_->headers,
                               reinterpret_cast<const char*>(bytes.data()), bytes.size(),
                               "application/octet-stream");
  check_status(res, "PUT " + path);
  return body_json(res);
}

std::vector<std::uint8_t> ApiClient::get_bytes(const std::string& path) {
  auto res = impl_->client.Get(path, impl_->headers);
  check_status(res, "GET " + path);
  return {res->body.begin(), res->body.end()};
}

int ApiClient::status_of(const std::string& method, const std::string& path,
                         const std::string& body) {
  httplib::Request req;
  req.method = method;
  req.path = path;
  req.headers = impl_->headers;
  req.body = body;
  if (!body.empty()) req.set_header("Content-Type", "application/json");
  auto res = impl_->client.send(req);
  if (!res) raise_network(method + " " + path, res.error());
  return res->status;
}

std::string url_encode(const std::string& s) {
  return httplib::detail::encode_query_param(s);
}

}  // namespace fedsilo
