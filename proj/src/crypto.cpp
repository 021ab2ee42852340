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

#include "fedsilo/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include <array>

#include "fedsilo/error.hpp"

namespace fedsilo::crypto {
namespace {

constexpr int kPbkdf2Iterations = 20000;
constexpr std::size_t kSaltBytes = 16;
constexpr std::size_t kHashBytes = 32;

std::vector<std::uint8_t> random_bytes(std::size_t n) {
  std::vector<std::uint8_t> out(n);
  if (RAND_bytes(out.data(), static_cast<int>(n)) != 1) {
    throw Error(ErrorCode::kInternal, "CSPRNG failure");
  }
  return out;
}

std::vector<std::uint8_t> hex_decode(std::string_view hex) {
  std::vector<std::uint8_t> out;
  if (hex.size() % 2 != 0) return out;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = nibble(hex[i]);
    const int lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) return {};
    out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
  }
  return out;
}

std::vector<std::uint8_t> pbkdf2(std::string_view password,
                                 std::span<const std::uint8_t> salt,
                                 int iterations) {
  std::vector<std::uint8_t> out(kHashBytes);
  if (PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()),
                        salt.data(), static_cast<int>(salt.size()), iterations,
                        EVP_sha256(), static_cast<int>(out.size()),
                        out.data()) != 1) {
    throw Error(ErrorCode::kInternal, "PBKDF2 failure");
  }
  return out;
}

}  // namespace

std::string hex_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::array<std::uint8_t, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error(ErrorCode::kInternal, "SHA-256 failure");
  }
  return hex_encode(std::span(md.data(), len));
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

bool is_sha256_hex(std::string_view s) {
  if (s.size() != 64) return false;
  for (char c : s) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

std::string random_token(std::size_t bytes) {
  return hex_encode(random_bytes(bytes));
}

std::string random_id(std::string_view prefix) {
  return std::string(prefix) + "_" + hex_encode(random_bytes(8));
}

std::string hash_password(std::string_view password) {
  const auto salt = random_bytes(kSaltBytes);
  const auto hash = pbkdf2(password, salt, kPbkdf2Iterations);
  return "pbkdf2-sha256$" + std::to_string(kPbkdf2Iterations) + "$" +
         hex_encode(salt) + "$" + hex_encode(hash);
}

bool verify_password(std::string_view password, std::string_view encoded) {
  // pbkdf2-sha256$<iters>$<salt>$<hash>
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = encoded.find('$', start);
    parts.push_back(encoded.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (parts.size() != 4 || parts[0] != "pbkdf2-sha256") return false;
  int iterations = 0;
  try {
    iterations = std::stoi(std::string(parts[1]));
  } catch (...) {
    return false;
  }
  const auto salt = hex_decode(parts[2]);
  if (iterations <= 0 || salt.empty()) return false;
  const auto hash = hex_encode(pbkdf2(password, salt, iterations));
  return constant_time_equal(hash, parts[3]);
}

bool constant_time_equal(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

}  // namespace fedsilo::crypto
