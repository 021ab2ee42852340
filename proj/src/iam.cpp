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

#include "fedsilo/iam.hpp"

#include <algorithm>
#include <utility>
#include <json.hpp>

#include "fedsilo/crypto.hpp"
#include "fedsilo/error.hpp"
#include "fedsilo/fs_util.hpp"

namespace fedsilo {
namespace {

using nlohmann::json;

std::string normalize_email(std::string email) {
  std::transform(email.begin(), email.end(), email.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return email;
}

std::string scope_name(Scope s) { return s == Scope::kApi ? "api" : "agent"; }
Scope scope_from(const std::string& s) {
  return s == "agent" ? Scope::kAgent : Scope::kApi;
}

json membership_json(const Membership& m) {
  return {{"account_id", m.account_id},
          {"role", m.role == Role::kAdmin ? "admin" : "member"},
          {"status", m.status == MembershipStatus::kActive ? "active" : "invited"}};
}

}  // namespace

const Membership* Federation::find(const std::string& account_id) const {
  for (const auto& m : members) {
    if (m.account_id == account_id) return &m;
  }
  return nullptr;
}

IdentityService::IdentityService(const Clock& clock,
                                 std::optional<std::filesystem::path> state_file)
    : clock_(clock), state_file_(std::move(state_file)) {
  load();
}

Account IdentityService::create_account(const std::string& display_name,
                                        const std::string& email,
                                        const std::string& password) {
  const auto key = normalize_email(email);
  if (key.empty() || key.find('@') == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "a valid email is required");
  }
  if (password.size() < kMinPasswordLength) {
    throw Error(ErrorCode::kWeakPassword,
                "password must be at least " +
                    std::to_string(kMinPasswordLength) + " characters");
  }
  auto hash = crypto::hash_password(password);
  std::unique_lock lock(mu_);
  if (email_index_.contains(key)) {
    throw Error(ErrorCode::kDuplicateEmail, "email already registered");
  }
  Account a{crypto::random_id("acct"), display_name, key, std::move(hash)};
  accounts_[a.account_id] = a;
  email_index_[key] = a.account_id;
  persist_locked();
  return a;
}

AccessToken IdentityService::login(const std::string& email,
                                   const std::string& password) {
  std::string account_id;
  std::string hash;
  {
    std::shared_lock lock(mu_);
    if (auto it = email_index_.find(normalize_email(email));
        it != email_index_.end()) {
      account_id = it->second;
      hash = accounts_.at(account_id).password_hash;
    }
  }
  // Unknown email and wrong password are indistinguishable to the caller.
  const bool ok = !hash.empty() && crypto::verify_password(password, hash);
  if (!ok) throw Error(ErrorCode::kBadCredentials, "bad credentials");
  std::unique_lock lock(mu_);
  auto token = issue_locked(account_id, {Scope::kApi}, kApiTokenTtlMs, {});
  persist_locked();
  return token;
}

void IdentityService::revoke(const std::string& token) {
  std::unique_lock lock(mu_);
  tokens_.erase(crypto::sha256_hex(token));
  persist_locked();
}

Principal IdentityService::authenticate(const std::string& token) const {
  std::shared_lock lock(mu_);
  return authenticate_locked(token);
}

Principal IdentityService::authenticate_locked(const std::string& token) const {
  if (token.empty()) throw Error(ErrorCode::kUnauthorized, "missing token");
  const auto digest = crypto::sha256_hex(token);
  const auto it = tokens_.find(digest);
  if (it == tokens_.end() || !crypto::constant_time_equal(it->first, digest)) {
    throw Error(ErrorCode::kUnauthorized, "invalid or revoked token");
  }
  if (clock_.now_ms() >= it->second.expires_at) {
    throw Error(ErrorCode::kUnauthorized, "token expired");
  }
  return {it->second.account_id, it->second.scopes, it->second.endpoint_id};
}

const Federation& IdentityService::federation_locked(
    const std::string& federation_id) const {
  const auto it = federations_.find(federation_id);
  if (it == federations_.end()) {
    // Unknown federations look the same as ones the caller cannot see.
    throw Error(ErrorCode::kForbidden,
                "no access to federation '" + federation_id + "'");
  }
  return it->second;
}

Federation& IdentityService::mutable_federation_locked(
    const std::string& federation_id) {
  return const_cast<Federation&>(
      std::as_const(*this).federation_locked(federation_id));
}

Federation IdentityService::create_federation(const std::string& token,
                                              const std::string& name) {
  std::unique_lock lock(mu_);
  const auto who = authenticate_locked(token);
  if (!who.scopes.contains(Scope::kApi)) {
    throw Error(ErrorCode::kForbidden, "token lacks api scope");
  }
  if (name.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "federation name is required");
  }
  Federation f;
  f.federation_id = crypto::random_id("fed");
  f.name = name;
  f.admin_id = who.account_id;
  f.members.push_back({who.account_id, Role::kAdmin, MembershipStatus::kActive});
  f.created_at = clock_.now_ms();
  federations_[f.federation_id] = f;
  persist_locked();
  return f;
}

Membership IdentityService::invite_member(const std::string& token,
                                          const std::string& federation_id,
                                          const std::string& email) {
  std::unique_lock lock(mu_);
  const auto who = authenticate_locked(token);
  auto& fed = mutable_federation_locked(federation_id);
  const auto* me = fed.find(who.account_id);
  if (me == nullptr || me->status != MembershipStatus::kActive) {
    throw Error(ErrorCode::kForbidden, "not a member of this federation");
  }
  if (me->role != Role::kAdmin || !who.scopes.contains(Scope::kApi)) {
    throw Error(ErrorCode::kNotAdmin, "only the federation admin can invite");
  }
  const auto acct = email_index_.find(normalize_email(email));
  if (acct == email_index_.end()) {
    throw Error(ErrorCode::kNoSuchAccount, "no account for " + email);
  }
  if (fed.find(acct->second) != nullptr) {
    throw Error(ErrorCode::kAlreadyMember,
                email + " is already invited or a member");
  }
  Membership m{acct->second, Role::kMember, MembershipStatus::kInvited};
  fed.members.push_back(m);
  persist_locked();
  return m;
}

Membership IdentityService::accept_invitation(const std::string& token,
                                              const std::string& federation_id) {
  std::unique_lock lock(mu_);
  const auto who = authenticate_locked(token);
  if (!who.scopes.contains(Scope::kApi)) {
    throw Error(ErrorCode::kForbidden, "token lacks api scope");
  }
  const auto it = federations_.find(federation_id);
  if (it == federations_.end()) {
    throw Error(ErrorCode::kNoSuchInvitation, "no invitation to this federation");
  }
  for (auto& m : it->second.members) {
    if (m.account_id != who.account_id) continue;
    if (m.status == MembershipStatus::kActive) {
      throw Error(ErrorCode::kAlreadyMember, "already an active member");
    }
    m.status = MembershipStatus::kActive;
    persist_locked();
    return m;
  }
  throw Error(ErrorCode::kNoSuchInvitation, "no invitation to this federation");
}

void IdentityService::remove_member(const std::string& token,
                                    const std::string& federation_id,
                                    const std::string& account_id) {
  std::vector<MemberRemovedFn> callbacks;
  {
    std::unique_lock lock(mu_);
    const auto who = authenticate_locked(token);
    auto& fed = mutable_federation_locked(federation_id);
    const auto* me = fed.find(who.account_id);
    if (me == nullptr || me->status != MembershipStatus::kActive) {
      throw Error(ErrorCode::kForbidden, "not a member of this federation");
    }
    if (me->role != Role::kAdmin) {
      throw Error(ErrorCode::kNotAdmin, "only the federation admin can remove");
    }
    if (account_id == fed.admin_id) {
      throw Error(ErrorCode::kInvalidArgument, "the admin cannot be removed");
    }
    const auto before = fed.members.size();
    std::erase_if(fed.members,
                  [&](const Membership& m) { return m.account_id == account_id; });
    if (fed.members.size() == before) {
      throw Error(ErrorCode::kNoSuchAccount, "account is not in this federation");
    }
    persist_locked();
    callbacks = member_removed_;
  }
  for (const auto& fn : callbacks) fn(federation_id, account_id);
}

std::string IdentityService::authorize(const std::string& token,
                                       const std::string& federation_id,
                                       Role required_role,
                                       Scope required_scope) const {
  std::shared_lock lock(mu_);
  const auto who = authenticate_locked(token);
  if (!who.scopes.contains(required_scope)) {
    throw Error(ErrorCode::kForbidden, "token lacks the required scope");
  }
  const auto& fed = federation_locked(federation_id);
  const auto* m = fed.find(who.account_id);
  if (m == nullptr || m->status != MembershipStatus::kActive) {
    throw Error(ErrorCode::kForbidden,
                "not an active member of federation '" + federation_id + "'");
  }
  if (required_role == Role::kAdmin && m->role != Role::kAdmin) {
    throw Error(ErrorCode::kForbidden, "federation admin role required");
  }
  return who.account_id;
}

Federation IdentityService::get_federation(const std::string& token,
                                           const std::string& federation_id) const {
  authorize(token, federation_id, Role::kMember, Scope::kApi);
  std::shared_lock lock(mu_);
  return federation_locked(federation_id);
}

std::vector<Federation> IdentityService::list_federations(
    const std::string& token) const {
  std::shared_lock lock(mu_);
  const auto who = authenticate_locked(token);
  std::vector<Federation> out;
  for (const auto& [id, f] : federations_) {
    const auto* m = f.find(who.account_id);
    if (m != nullptr && m->status == MembershipStatus::kActive) out.push_back(f);
  }
  return out;
}

std::vector<Federation> IdentityService::pending_invitations(
    const std::string& token) const {
  std::shared_lock lock(mu_);
  const auto who = authenticate_locked(token);
  std::vector<Federation> out;
  for (const auto& [id, f] : federations_) {
    const auto* m = f.find(who.account_id);
    if (m != nullptr && m->status == MembershipStatus::kInvited) {
      // Invitees see only the label, not the roster.
      Federation stub;
      stub.federation_id = f.federation_id;
      stub.name = f.name;
      stub.admin_id = f.admin_id;
      stub.created_at = f.created_at;
      out.push_back(std::move(stub));
    }
  }
  return out;
}

AccessToken IdentityService::issue_agent_token(const std::string& account_id,
                                               const std::string& endpoint_id) {
  std::unique_lock lock(mu_);
  auto token =
      issue_locked(account_id, {Scope::kAgent}, kAgentTokenTtlMs, endpoint_id);
  persist_locked();
  return token;
}

void IdentityService::revoke_endpoint_tokens(const std::string& endpoint_id) {
  std::unique_lock lock(mu_);
  std::erase_if(tokens_, [&](const auto& kv) {
    return kv.second.endpoint_id == endpoint_id;
  });
  persist_locked();
}

bool IdentityService::is_active_member(const std::string& federation_id,
                                       const std::string& account_id) const {
  std::shared_lock lock(mu_);
  const auto it = federations_.find(federation_id);
  if (it == federations_.end()) return false;
  const auto* m = it->second.find(account_id);
  return m != nullptr && m->status == MembershipStatus::kActive;
}

bool IdentityService::federation_exists(const std::string& federation_id) const {
  std::shared_lock lock(mu_);
  return federations_.contains(federation_id);
}

Account IdentityService::account_info(const std::string& account_id) const {
  std::shared_lock lock(mu_);
  const auto it = accounts_.find(account_id);
  if (it == accounts_.end()) throw Error(ErrorCode::kNoSuchAccount, "no account " + account_id);
  auto a = it->second;
  a.password_hash.clear();
  return a;
}

void IdentityService::on_member_removed(MemberRemovedFn fn) {
  std::unique_lock lock(mu_);
  member_removed_.push_back(std::move(fn));
}

AccessToken IdentityService::issue_locked(const std::string& account_id,
                                          std::set<Scope> scopes,
                                          std::int64_t ttl_ms,
                                          std::optional<std::string> endpoint_id) {
  AccessToken t;
  t.token = crypto::random_token(32);
  t.account_id = account_id;
  t.scopes = std::move(scopes);
  t.expires_at = clock_.now_ms() + ttl_ms;
  t.endpoint_id = std::move(endpoint_id);
  tokens_[crypto::sha256_hex(t.token)] = {t.account_id, t.scopes, t.expires_at,
                                          t.endpoint_id};
  return t;
}

void IdentityService::persist_locked() const {
  if (!state_file_) return;
  json doc;
  doc["accounts"] = json::array();
  for (const auto& [id, a] : accounts_) {
    doc["accounts"].push_back({{"account_id", a.account_id},
                               {"display_name", a.display_name},
                               {"email", a.email},
                               {"password_hash", a.password_hash}});
  }
  doc["federations"] = json::array();
  for (const auto& [id, f] : federations_) {
    json members = json::array();
    for (const auto& m : f.members) members.push_back(membership_json(m));
    doc["federations"].push_back({{"federation_id", f.federation_id},
                                  {"name", f.name},
                                  {"admin_id", f.admin_id},
                                  {"created_at", f.created_at},
                                  {"members", members}});
  }
  doc["tokens"] = json::array();
  const auto now = clock_.now_ms();
  for (const auto& [hash, t] : tokens_) {
    if (t.expires_at <= now) continue;
    json scopes = json::array();
    for (auto s : t.scopes) scopes.push_back(scope_name(s));
    json rec = {{"hash", hash},
                {"account_id", t.account_id},
                {"scopes", scopes},
                {"expires_at", t.expires_at}};
    if (t.endpoint_id) rec["endpoint_id"] = *t.endpoint_id;
    doc["tokens"].push_back(std::move(rec));
  }
  write_file_atomic(*state_file_, doc.dump());
}

void IdentityService::load() {
  if (!state_file_ || !std::filesystem::exists(*state_file_)) return;
  const auto doc = json::parse(read_text_file(*state_file_));
  for (const auto& a : doc.at("accounts")) {
    Account acct{a.at("account_id"), a.at("display_name"), a.at("email"),
                 a.at("password_hash")};
    email_index_[acct.email] = acct.account_id;
    accounts_[acct.account_id] = std::move(acct);
  }
  for (const auto& f : doc.at("federations")) {
    Federation fed;
    fed.federation_id = f.at("federation_id");
    fed.name = f.at("name");
    fed.admin_id = f.at("admin_id");
    fed.created_at = f.at("created_at");
    for (const auto& m : f.at("members")) {
      fed.members.push_back(
          {m.at("account_id"),
           m.at("role") == "admin" ? Role::kAdmin : Role::kMember,
           m.at("status") == "active" ? MembershipStatus::kActive
                                      : MembershipStatus::kInvited});
    }
    federations_[fed.federation_id] = std::move(fed);
  }
  for (const auto& t : doc.at("tokens")) {
    StoredToken st;
    st.account_id = t.at("account_id");
    for (const auto& s : t.at("scopes")) st.scopes.insert(scope_from(s));
    st.expires_at = t.at("expires_at");
    if (t.contains("endpoint_id")) st.endpoint_id = t.at("endpoint_id");
    tokens_[t.at("hash")] = std::move(st);
  }
}

}  // namespace fedsilo
