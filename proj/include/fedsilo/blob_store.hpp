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
#include <filesystem>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace fedsilo {

struct BlobDigest {
  std::string sha256;  // 64 lowercase hex characters
  std::uint64_t size_bytes = 0;

  bool operator==(const BlobDigest&) const = default;
};

// Content-addressed, immutable, deduplicating file store. Objects live at
// <root>/objects/<first two hex>/<digest>; per-federation read grants are
// marker files under <root>/grants/<digest>/.
class BlobStore {
 public:
  explicit BlobStore(std::filesystem::path root);

  BlobDigest put(std::span<const std::uint8_t> bytes);

  // Verifies the recomputed digest; throws NoSuchBlob or DigestMismatch.
  std::vector<std::uint8_t> get(const std::string& digest) const;

  bool contains(const std::string& digest) const;

  void grant(const std::string& digest, const std::string& federation_id);
  bool granted(const std::string& digest, const std::string& federation_id) const;

  std::filesystem::path object_path(const std::string& digest) const;

  // Number of stored objects; used to check deduplication.
  std::size_t object_count() const;

 private:
  std::filesystem::path root_;
  mutable std::mutex write_mu_;
};

}  // namespace fedsilo
