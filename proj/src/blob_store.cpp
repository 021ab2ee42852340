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

#include "fedsilo/blob_store.hpp"

#include <fstream>

#include "fedsilo/crypto.hpp"
#include "fedsilo/error.hpp"
#include "fedsilo/fs_util.hpp"

namespace fedsilo {

namespace fs = std::filesystem;

BlobStore::BlobStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "objects");
  fs::create_directories(root_ / "grants");
}

fs::path BlobStore::object_path(const std::string& digest) const {
  return root_ / "objects" / digest.substr(0, 2) / digest;
}

BlobDigest BlobStore::put(std::span<const std::uint8_t> bytes) {
  BlobDigest d{crypto::sha256_hex(bytes), bytes.size()};
  const auto path = object_path(d.sha256);
  std::lock_guard lock(write_mu_);
  if (!fs::exists(path)) {
    write_file_atomic(path, std::string_view(
                                reinterpret_cast<const char*>(bytes.data()),
                                bytes.size()));
  }
  return d;
}

std::vector<std::uint8_t> BlobStore::get(const std::string& digest) const {
  if (!crypto::is_sha256_hex(digest)) {
    throw Error(ErrorCode::kNoSuchBlob, "malformed digest '" + digest + "'");
  }
  const auto path = object_path(digest);
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kNoSuchBlob, "no blob " + digest);
  }
  auto bytes = read_binary_file(path);
  if (crypto::sha256_hex(bytes) != digest) {
    throw Error(ErrorCode::kDigestMismatch,
                "stored content of " + digest + " is corrupt");
  }
  return bytes;
}

bool BlobStore::contains(const std::string& digest) const {
  return crypto::is_sha256_hex(digest) && fs::exists(object_path(digest));
}

void BlobStore::grant(const std::string& digest,
                      const std::string& federation_id) {
  const auto dir = root_ / "grants" / digest;
  fs::create_directories(dir);
  std::ofstream(dir / federation_id).flush();
}

bool BlobStore::granted(const std::string& digest,
                        const std::string& federation_id) const {
  if (!crypto::is_sha256_hex(digest)) return false;
  return fs::exists(root_ / "grants" / digest / federation_id);
}

std::size_t BlobStore::object_count() const {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(root_ / "objects")) {
    if (e.is_regular_file() && crypto::is_sha256_hex(e.path().filename().string())) {
      ++n;
    }
  }
  return n;
}

}  // namespace fedsilo
