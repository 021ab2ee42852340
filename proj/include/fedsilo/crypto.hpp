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
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedsilo::crypto {

// Lowercase hex SHA-256 of the input (64 characters).
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

bool is_sha256_hex(std::string_view s);

// URL-safe token with `bytes` bytes of CSPRNG entropy, hex-encoded.
std::string random_token(std::size_t bytes = 32);

// Short random identifier with a readable prefix, e.g. "exp_1f3a...".
std::string random_id(std::string_view prefix);

std::string hex_encode(std::span<const std::uint8_t> bytes);

// PBKDF2-HMAC-SHA256; returns "pbkdf2-sha256$<iters>$<salt hex>$<hash hex>".
std::string hash_password(std::string_view password);
bool verify_password(std::string_view password, std::string_view encoded);

bool constant_time_equal(std::string_view a, std::string_view b);

}  // namespace fedsilo::crypto
