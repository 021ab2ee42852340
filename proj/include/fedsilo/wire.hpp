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

#include <json.hpp>

#include "fedsilo/aggregation.hpp"
#include "fedsilo/dispatch.hpp"

// JSON encodings of the records exchanged over the REST API.
namespace fedsilo {

void to_json(nlohmann::json& j, const TrainingMetrics& m);
void from_json(const nlohmann::json& j, TrainingMetrics& m);

void to_json(nlohmann::json& j, const AggregatorHyper& h);
void from_json(const nlohmann::json& j, AggregatorHyper& h);

void to_json(nlohmann::json& j, const ResourceMetrics& m);
void from_json(const nlohmann::json& j, ResourceMetrics& m);

void to_json(nlohmann::json& j, const EndpointRecord& r);
void from_json(const nlohmann::json& j, EndpointRecord& r);

void to_json(nlohmann::json& j, const TaskEnvelope& e);
void from_json(const nlohmann::json& j, TaskEnvelope& e);

void to_json(nlohmann::json& j, const TaskResult& r);
void from_json(const nlohmann::json& j, TaskResult& r);

void to_json(nlohmann::json& j, const BlobDigest& d);
void from_json(const nlohmann::json& j, BlobDigest& d);

}  // namespace fedsilo
