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

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "fedsilo/clock.hpp"

namespace fedsilo {

enum class Scope { kApi, kAgent };
enum class Role { kAdmin, kMember };
enum class MembershipStatus { kInvited, kActive };

struct Account {
  std::string account_id;
  std::string display_name;
  std::string email;
  std::string password_hash;  // salted PBKDF2, never the clear password
};

struct Membership {
  std::string account_id;
  Role role = Role::kMember;
  MembershipStatus status = MembershipStatus::kInvited;

  bool operator==(const Membership&) const = default;
};

struct Federation {
  std::string federation_id;
  std::string name;
  std::string admin_id;
  std::vector<Membership> members;
  TimestampMs created_at = 0;

  const Membership* find(const std::string& account_id) const;
};

// Issued credential. `token` holds the clear bearer string only in the value
// returned at issuance; the service itself stores a SHA-256 of it.
struct AccessToken {
  std::string token;
  std::string account_id;
  std::set<Scope> scopes;
  TimestampMs expires_at = 0;
  std::optional<std::string> endpoint_id;  // set for agent tokens
};

// What a valid bearer token resolves to.
struct Principal {
  std::string account_id;
  std::set<Scope> scopes;
  std::optional<std::string> endpoint_id;
};

inline constexpr std::int64_t kApiTokenTtlMs = 24LL * 3600 * 1000;
inline constexpr std::int64_t kAgentTokenTtlMs = 365LL * 24 * 3600 * 1000;
inline constexpr std::size_t kMinPasswordLength = 10;

// Accounts, federations, invitations and bearer tokens. State is persisted
// as a single JSON document when a state file is given.
class IdentityService {
 public:
  using MemberRemovedFn =
      std::function<void(const std::string& federation_id,
                         const std::string& account_id)>;

  IdentityService(const Clock& clock,
                  std::optional<std::filesystem::path> state_file = {});

  Account create_account(const std::string& display_name,
                         const std::string& email, const std::string& password);
  AccessToken login(const std::string& email, const std::string& password);
  void revoke(const std::string& token);

  // Throws Unauthorized for unknown, revoked or expired tokens.
  Principal authenticate(const std::string& token) const;

  Federation create_federation(const std::string& token,
                               const std::string& name);
  Membership invite_member(const std::string& token,
                           const std::string& federation_id,
                           const std::string& email);
  Membership accept_invitation(const std::string& token,
                               const std::string& federation_id);
  // Admin-only; the admin cannot remove themself.
  void remove_member(const std::string& token, const std::string& federation_id,
                     const std::string& account_id);

  // Returns the caller's account when the token is valid, carries the scope,
  // and belongs to an active member with at least the required role.
  std::string authorize(const std::string& token,
                        const std::string& federation_id, Role required_role,
                        Scope required_scope) const;

  Federation get_federation(const std::string& token,
                            const std::string& federation_id) const;
  std::vector<Federation> list_federations(const std::string& token) const;
  std::vector<Federation> pending_invitations(const std::string& token) const;

  // Internal: long-lived agent-scoped credential bound to one endpoint.
  AccessToken issue_agent_token(const std::string& account_id,
                                const std::string& endpoint_id);
  void revoke_endpoint_tokens(const std::string& endpoint_id);

  bool is_active_member(const std::string& federation_id,
                        const std::string& account_id) const;
  bool federation_exists(const std::string& federation_id) const;
  // Public profile (password hash cleared); throws NoSuchAccount.
  Account account_info(const std::string& account_id) const;

  void on_member_removed(MemberRemovedFn fn);

 private:
  struct StoredToken {
    std::string account_id;
    std::set<Scope> scopes;
    TimestampMs expires_at = 0;
    std::optional<std::string> endpoint_id;
  };

  Principal authenticate_locked(const std::string& token) const;
  const Federation& federation_locked(const std::string& federation_id) const;
  Federation& mutable_federation_locked(const std::string& federation_id);
  AccessToken issue_locked(const std::string& account_id,
                           std::set<Scope> scopes, std::int64_t ttl_ms,
                           std::optional<std::string> endpoint_id);
  void persist_locked() const;
  void load();

  const Clock& clock_;
  std::optional<std::filesystem::path> state_file_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Account> accounts_;          // by account_id
  std::map<std::string, std::string> email_index_;   // email -> account_id
  std::map<std::string, Federation> federations_;    // by federation_id
  std::map<std::string, StoredToken> tokens_;        // sha256(token) -> record
  std::vector<MemberRemovedFn> member_removed_;
};

}  // namespace fedsilo
