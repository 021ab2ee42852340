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

#include "fedsilo/error.hpp"

#include <array>
#include <utility>

namespace fedsilo {
namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 40> kNames{{
    {ErrorCode::kInvalidArgument, "InvalidArgument"},
    {ErrorCode::kLayoutMismatch, "LayoutMismatch"},
    {ErrorCode::kDegenerateWeights, "DegenerateWeights"},
    {ErrorCode::kNonFinite, "NonFinite"},
    {ErrorCode::kMalformedBlob, "MalformedBlob"},
    {ErrorCode::kEmptyUpdateSet, "EmptyUpdateSet"},
    {ErrorCode::kNegativeStaleness, "NegativeStaleness"},
    {ErrorCode::kAlgorithmArityMismatch, "AlgorithmArityMismatch"},
    {ErrorCode::kDuplicateEmail, "DuplicateEmail"},
    {ErrorCode::kWeakPassword, "WeakPassword"},
    {ErrorCode::kBadCredentials, "BadCredentials"},
    {ErrorCode::kUnauthorized, "Unauthorized"},
    {ErrorCode::kForbidden, "Forbidden"},
    {ErrorCode::kNotAdmin, "NotAdmin"},
    {ErrorCode::kAlreadyMember, "AlreadyMember"},
    {ErrorCode::kNoSuchInvitation, "NoSuchInvitation"},
    {ErrorCode::kNoSuchFederation, "NoSuchFederation"},
    {ErrorCode::kNoSuchAccount, "NoSuchAccount"},
    {ErrorCode::kDuplicateEndpointName, "DuplicateEndpointName"},
    {ErrorCode::kUnknownEndpoint, "UnknownEndpoint"},
    {ErrorCode::kUnknownTask, "UnknownTask"},
    {ErrorCode::kDuplicateResult, "DuplicateResult"},
    {ErrorCode::kInvalidMetrics, "InvalidMetrics"},
    {ErrorCode::kNoSuchBlob, "NoSuchBlob"},
    {ErrorCode::kDigestMismatch, "DigestMismatch"},
    {ErrorCode::kCrossFederationDispatch, "CrossFederationDispatch"},
    {ErrorCode::kEndpointOffline, "EndpointOffline"},
    {ErrorCode::kInvalidConfig, "InvalidConfig"},
    {ErrorCode::kQuorumNotReached, "QuorumNotReached"},
    {ErrorCode::kNoSuchExperiment, "NoSuchExperiment"},
    {ErrorCode::kInvalidState, "InvalidState"},
    {ErrorCode::kParseError, "ParseError"},
    {ErrorCode::kLabelOutOfRange, "LabelOutOfRange"},
    {ErrorCode::kNonFiniteLoss, "NonFiniteLoss"},
    {ErrorCode::kEmptySplit, "EmptySplit"},
    {ErrorCode::kInvalidPrivacyConfig, "InvalidPrivacyConfig"},
    {ErrorCode::kIoError, "IoError"},
    {ErrorCode::kNetworkError, "NetworkError"},
    {ErrorCode::kUnavailable, "Unavailable"},
    {ErrorCode::kInternal, "Internal"},
}};

}  // namespace

std::string_view error_code_name(ErrorCode code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Internal";
}

std::optional<ErrorCode> error_code_from_name(std::string_view name) {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  return std::nullopt;
}

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnauthorized:
    case ErrorCode::kBadCredentials:
      return 401;
    case ErrorCode::kForbidden:
    case ErrorCode::kNotAdmin:
    case ErrorCode::kCrossFederationDispatch:
      return 403;
    case ErrorCode::kNoSuchInvitation:
    case ErrorCode::kNoSuchFederation:
    case ErrorCode::kNoSuchAccount:
    case ErrorCode::kUnknownEndpoint:
    case ErrorCode::kUnknownTask:
    case ErrorCode::kNoSuchBlob:
    case ErrorCode::kNoSuchExperiment:
      return 404;
    case ErrorCode::kDuplicateEmail:
    case ErrorCode::kAlreadyMember:
    case ErrorCode::kDuplicateEndpointName:
    case ErrorCode::kDuplicateResult:
    case ErrorCode::kEndpointOffline:
    case ErrorCode::kInvalidState:
      return 409;
    case ErrorCode::kDigestMismatch:
    case ErrorCode::kIoError:
    case ErrorCode::kInternal:
    case ErrorCode::kNetworkError:
    case ErrorCode::kQuorumNotReached:
      return 500;
    case ErrorCode::kUnavailable:
      return 503;
    default:
      return 400;
  }
}

}  // namespace fedsilo
