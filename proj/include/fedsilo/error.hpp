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

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fedsilo {

// Every failure surfaced by the library carries one of these codes. The code
// name is what travels over the wire in error responses.
enum class ErrorCode {
  kInvalidArgument,
  kLayoutMismatch,
  kDegenerateWeights,
  kNonFinite,
  kMalformedBlob,
  kEmptyUpdateSet,
  kNegativeStaleness,
  kAlgorithmArityMismatch,
  kDuplicateEmail,
  kWeakPassword,
  kBadCredentials,
  kUnauthorized,
  kForbidden,
  kNotAdmin,
  kAlreadyMember,
  kNoSuchInvitation,
  kNoSuchFederation,
  kNoSuchAccount,
  kDuplicateEndpointName,
  kUnknownEndpoint,
  kUnknownTask,
  kDuplicateResult,
  kInvalidMetrics,
  kNoSuchBlob,
  kDigestMismatch,
  kCrossFederationDispatch,
  kEndpointOffline,
  kInvalidConfig,
  kQuorumNotReached,
  kNoSuchExperiment,
  kInvalidState,
  kParseError,
  kLabelOutOfRange,
  kNonFiniteLoss,
  kEmptySplit,
  kInvalidPrivacyConfig,
  kIoError,
  kNetworkError,
  kUnavailable,
  kInternal,
};

std::string_view error_code_name(ErrorCode code);
std::optional<ErrorCode> error_code_from_name(std::string_view name);

// HTTP status used when the error crosses the REST boundary.
int http_status_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::map<std::string, std::string> fields = {})
      : std::runtime_error(message), code_(code), fields_(std::move(fields)) {}

  ErrorCode code() const noexcept { return code_; }

  // Field-level diagnostics (config validation); empty for most errors.
  const std::map<std::string, std::string>& fields() const noexcept {
    return fields_;
  }

 private:
  ErrorCode code_;
  std::map<std::string, std::string> fields_;
};

}  // namespace fedsilo
