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

#include <cstdint>
#include <json.hpp>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedsilo/error.hpp"

namespace fedsilo {

// An error reported by the server (as opposed to a local failure).
class ServerError : public Error {
 public:
  ServerError(ErrorCode code, const std::string& message, int http_status,
              std::map<std::string, std::string> fields = {})
      : Error(code, message, std::move(fields)), http_status_(http_status) {}
  int http_status() const noexcept { return http_status_; }

 private:
  int http_status_;
};

struct ClientTlsOptions {
  std::optional<std::string> ca_cert_file;
  bool verify = true;
};

// Thin JSON-over-HTTP(S) client. Not thread-safe: use one instance per thread.
// Connection failures throw Error(NetworkError); non-2xx responses throw
// ServerError carrying the server's error name, message and fields.
class ApiClient {
 public:
  ApiClient(const std::string& base_url, std::optional<std::string> token = {},
            ClientTlsOptions tls = {});
  ~ApiClient();
  ApiClient(const ApiClient&) = delete;
  ApiClient& operator=(const ApiClient&) = delete;

  void set_token(std::optional<std::string> token);
  void set_read_timeout_ms(std::int64_t ms);

  nlohmann::json get(const std::string& path);
  nlohmann::json post(const std::string& path, const nlohmann::json& body = nlohmann::json::object());
  nlohmann::json del(const std::string& path);
  nlohmann::json put_bytes(const std::string& path, std::span<const std::uint8_t> bytes);
  std::vector<std::uint8_t> get_bytes(const std::string& path);

  // Raw status for a request; used by tests that probe routes.
  int status_of(const std::string& method, const std::string& path,
                const std::string& body = "");

  const std::string& base_url() const { return base_url_; }

 private:
  struct Impl;
  std::string base_url_;
  std::unique_ptr<Impl> impl_;
};

std::string url_encode(const std::string& s);

}  // namespace fedsilo
