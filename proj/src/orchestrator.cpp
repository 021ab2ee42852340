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

#include "fedsilo/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <variant>

#include "fedsilo/crypto.hpp"
#include "fedsilo/error.hpp"
#include "fedsilo/wire.hpp"

namespace fedsilo {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::int64_t round, std::size_t client) {
  return splitmix64(splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(round))) +
                    client);
}

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (const auto& x : xs) out += (out.empty() ? "" : ", ") + x;
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::optional<GlobalMetrics> weighted_validation(
    const std::map<std::string, ClientRoundEntry>& per_client) {
  double acc = 0.0, loss = 0.0, n = 0.0;
  for (const auto& [id, e] : per_client) {
    if (!e.val_accuracy || !e.val_samples || *e.val_samples <= 0) continue;
    const double w = static_cast<double>(*e.val_samples);
    acc += w * *e.val_accuracy;
    loss += w * e.val_loss.value_or(0.0);
    n += w;
  }
  if (n == 0.0) return std::nullopt;
  return GlobalMetrics{acc / n, loss / n};
}

struct Orchestrator::Run {
  mutable std::mutex mu;
  mutable std::condition_variable cv;
  ExperimentRecord record;
  std::deque<DispatchEvent> inbox;
  bool cancel_requested = false;
  bool stop_requested = false;
  std::thread thread;
};

// Drives one experiment. Only this object mutates the aggregation state and
// the record's rounds; API readers take snapshots under Run::mu.
class Orchestrator::Supervisor {
 public:
  Supervisor(Orchestrator& o, std::shared_ptr<Run> run)
      : o_(o), run_(std::move(run)), config_(run_->record.config) {}

  void operator()() {
    try {
      log("experiment started: " + std::string(algorithm_name(config_.algorithm)) + ", " +
          std::to_string(config_.rounds) + " rounds, " + std::to_string(config_.roster.size()) +
          " clients");
      state_ = AggregatorState::initial(config_.algorithm, init_model(config_.model_spec),
                                        config_.aggregator_hyper);
      request_histograms();
      if (is_async(config_.algorithm)) {
        run_async();
      } else {
        run_sync();
      }
    } catch (const Stopped&) {
    } catch (const Error& e) {
      finish(ExperimentStatus::kFailed,
             std::string(error_code_name(e.code())) + ": " + e.what());
    } catch (const std::exception& e) {
      finish(ExperimentStatus::kFailed, std::string("internal error: ") + e.what());
    }
    cancel_all_pending();
    o_.dispatch_.remove_listener(config_.experiment_id);
  }

 private:
  struct Stopped {};
  struct Pending {
    std::string endpoint_id;
    TaskKind kind;
    std::int64_t round;  // train: base round; evaluate: round being evaluated
    TimestampMs sent_at;
  };

  TimestampMs now() const { return o_.clock_.now_ms(); }

  void log(const std::string& text) {
    const LogLine line{now(), text};
    {
      std::lock_guard lock(run_->mu);
      run_->record.log.push_back(line);
    }
    o_.store_.append_log(config_.experiment_id, line);
    run_->cv.notify_all();
  }

  template <class Fn>
  void mutate(Fn fn) {
    ExperimentRecord snapshot;
    {
      std::lock_guard lock(run_->mu);
      fn(run_->record);
      snapshot = run_->record;
    }
    snapshot.log.clear();
    o_.store_.save(snapshot);
    run_->cv.notify_all();
  }

  void finish(ExperimentStatus status, const std::optional<std::string>& reason) {
    log(std::string("experiment ") + std::string(experiment_status_name(status)) +
        (reason ? ": " + *reason : ""));
    mutate([&](ExperimentRecord& r) {
      r.status = status;
      r.failure_reason = reason;
    });
  }

  void check_stop() {
    std::lock_guard lock(run_->mu);
    if (run_->stop_requested) throw Stopped{};
  }

  bool cancel_requested() {
    std::lock_guard lock(run_->mu);
    return run_->cancel_requested;
  }

  // Next dispatch event, or nullopt when `until` passes or cancellation is
  // requested. Sweeps the fabric each tick so deadlines fire.
  std::optional<DispatchEvent> next_event(TimestampMs until) {
    for (;;) {
      o_.dispatch_.sweep();
      std::unique_lock lock(run_->mu);
      if (run_->stop_requested) throw Stopped{};
      if (run_->cancel_requested) return std::nullopt;
      if (!run_->inbox.empty()) {
        auto ev = std::move(run_->inbox.front());
        run_->inbox.pop_front();
        return ev;
      }
      if (now() >= until) return std::nullopt;
      run_->cv.wait_for(lock, std::chrono::milliseconds(o_.options_.tick_ms));
    }
  }

  std::string upload(const ParameterVector& model) {
    const auto bytes = serialize(model);
    return o_.dispatch_.put_internal(bytes, config_.federation_id).sha256;
  }

  std::size_t roster_index(const std::string& endpoint_id) const {
    return static_cast<std::size_t>(
        std::find(config_.roster.begin(), config_.roster.end(), endpoint_id) -
        config_.roster.begin());
  }

  json train_payload(const std::string& endpoint_id, std::int64_t round) const {
    const auto idx = roster_index(endpoint_id);
    auto privacy = config_.privacy;
    if (privacy.noise_seed) privacy.noise_seed = derive_seed(*privacy.noise_seed, round, idx);
    return {{"model_spec", to_json(config_.model_spec)},
            {"loss", loss_kind_name(config_.loss)},
            {"epochs", config_.local_epochs},
            {"batch_size", config_.batch_size},
            {"lr", config_.lr_for_round(round)},
            {"seed", derive_seed(config_.seed, round, idx)},
            {"privacy", to_json(privacy)},
            {"base_round", state_.round}};
  }

  std::string send(const std::string& endpoint_id, TaskKind kind, std::int64_t round,
                   json payload, std::optional<std::string> model_blob, TimestampMs deadline) {
    TaskEnvelope env;
    env.task_id = crypto::random_id("task");
    env.experiment_id = config_.experiment_id;
    env.round = round;
    env.kind = kind;
    env.config_payload = std::move(payload);
    env.model_blob = std::move(model_blob);
    env.deadline = deadline;
    o_.dispatch_.enqueue_task(endpoint_id, config_.federation_id, env);
    pending_[env.task_id] = {endpoint_id, kind, kind == TaskKind::kTrain ? state_.round : round,
                             now()};
    return env.task_id;
  }

  std::string send_train(const std::string& endpoint_id, std::int64_t lr_round,
                         const std::string& model_blob, TimestampMs deadline) {
    return send(endpoint_id, TaskKind::kTrain, lr_round, train_payload(endpoint_id, lr_round),
                model_blob, deadline);
  }

  void cancel_all_pending() {
    for (const auto& [task_id, p] : pending_) o_.dispatch_.cancel_task(task_id);
    pending_.clear();
  }

  void cancel_pending(TaskKind kind) {
    for (auto it = pending_.begin(); it != pending_.end();) {
      if (it->second.kind == kind) {
        o_.dispatch_.cancel_task(it->first);
        it = pending_.erase(it);
      } else {
        ++it;
      }
    }
  }

  TimestampMs task_deadline(TimestampMs cap) const {
    std::int64_t span = o_.options_.min_task_deadline_ms;
    if (!last_train_seconds_.empty()) {
      auto v = last_train_seconds_;
      std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
      span = std::max<std::int64_t>(
          span, static_cast<std::int64_t>(o_.options_.deadline_factor * v[v.size() / 2] * 1000));
    }
    return std::min(cap, now() + span);
  }

  TimestampMs round_timeout_ms() const {
    return static_cast<TimestampMs>(config_.round_timeout_s * 1000.0);
  }

  void request_histograms() {
    const auto deadline = now() + round_timeout_ms();
    for (const auto& ep : config_.roster) {
      send(ep, TaskKind::kDataHistogram, 0, json::object(), std::nullopt, deadline);
    }
  }

  void record_histogram(const DispatchEvent& ev) {
    if (ev.result->status != TaskStatus::kSuccess) {
      log("data histogram from " + ev.endpoint_id + " failed: " +
          ev.result->error_message.value_or("no message"));
      return;
    }
    std::vector<std::int64_t> counts;
    if (ev.result->payload.contains("histogram")) {
      counts = ev.result->payload.at("histogram").get<std::vector<std::int64_t>>();
    }
    std::int64_t total = 0;
    for (auto c : counts) total += c;
    if (total == 0) log("warning: " + ev.endpoint_id + " reported an empty training set");
    mutate([&](ExperimentRecord& r) { r.data_histograms[ev.endpoint_id] = counts; });
  }

  // Removes and returns the pending entry an event refers to; events for
  // tasks this supervisor no longer tracks (cancelled stragglers) are dropped.
  std::optional<Pending> claim(const DispatchEvent& ev) {
    const auto it = pending_.find(ev.envelope.task_id);
    if (it == pending_.end()) return std::nullopt;
    auto p = it->second;
    pending_.erase(it);
    return p;
  }

  // Turns a successful train result into a client update; returns the error
  // text when the result is unusable.
  std::variant<ClientUpdate, std::string> to_update(const DispatchEvent& ev,
                                                    std::int64_t base_round) {
    const auto& res = *ev.result;
    if (res.status != TaskStatus::kSuccess) return res.error_message.value_or("task failed");
    try {
      auto weights = deserialize(o_.dispatch_.get_internal(*res.result_blob));
      if (!weights.same_layout(state_.global_model)) return std::string("layout mismatch");
      ClientUpdate u{ev.endpoint_id, base_round, std::move(weights), res.metrics.num_samples,
                     res.metrics};
      if (u.sample_count <= 0) return std::string("reported zero training samples");
      return u;
    } catch (const Error& e) {
      return std::string(error_code_name(e.code())) + ": " + e.what();
    }
  }

  static ClientRoundEntry entry_for(const DispatchEvent& ev, const std::string& status) {
    ClientRoundEntry e;
    e.status = status;
    if (ev.result) {
      e.metrics = ev.result->metrics;
      e.wall_seconds = ev.result->wall_seconds;
      e.error = ev.result->error_message;
    }
    return e;
  }

  void apply_evaluation(RoundRecord& rr, const DispatchEvent& ev) {
    auto& e = rr.per_client[ev.endpoint_id];
    if (e.status.empty()) e.status = "evaluated";
    if (ev.result->status != TaskStatus::kSuccess) {
      log("round " + std::to_string(rr.round) + ": evaluation on " + ev.endpoint_id +
          " failed: " + ev.result->error_message.value_or("no message"));
      return;
    }
    e.val_accuracy = ev.result->metrics.accuracy;
    e.val_loss = ev.result->metrics.loss;
    e.val_samples = ev.result->metrics.num_samples;
  }

  void finalize_global(RoundRecord& rr) {
    if (const auto g = weighted_validation(rr.per_client)) {
      rr.global_val_accuracy = g->accuracy;
      rr.global_val_loss = g->loss;
    } else {
      rr.global_val_accuracy.reset();
      rr.global_val_loss.reset();
    }
  }

  // ---- synchronous rounds -------------------------------------------------

  void run_sync() {
    const std::size_t n = config_.roster.size();
    const auto need = static_cast<std::size_t>(
        std::ceil(config_.quorum_fraction * static_cast<double>(n) - 1e-9));
    for (std::int64_t r = 1; r <= config_.rounds; ++r) {
      if (cancel_requested()) return finish_cancelled();
      RoundRecord rr;
      rr.round = r;
      rr.started_at = now();
      rr.client_lr_used = config_.lr_for_round(r);
      log("round " + std::to_string(r) + " started, client lr " + std::to_string(rr.client_lr_used));

      const auto blob = upload(state_.global_model);
      const TimestampMs round_deadline = now() + round_timeout_ms();
      for (const auto& ep : config_.roster) {
        send_train(ep, r, blob, task_deadline(round_deadline));
      }

      std::map<std::string, ClientUpdate> updates;
      std::set<std::string> failed;
      while (updates.size() < need && n - failed.size() >= need) {
        auto ev = next_event(round_deadline);
        if (!ev) break;
        if (ev->kind == DispatchEvent::Kind::kResult &&
            ev->envelope.kind == TaskKind::kDataHistogram) {
          if (claim(*ev)) record_histogram(*ev);
          continue;
        }
        const auto p = claim(*ev);
        if (!p || p->kind != TaskKind::kTrain) continue;
        switch (ev->kind) {
          case DispatchEvent::Kind::kResult: {
            auto u = to_update(*ev, p->round);
            if (auto* ok = std::get_if<ClientUpdate>(&u)) {
              rr.per_client[ev->endpoint_id] = entry_for(*ev, "success");
              updates.emplace(ev->endpoint_id, std::move(*ok));
              log("round " + std::to_string(r) + ": " + ev->endpoint_id + " returned (loss " +
                  fmt(ev->result->metrics.loss) + ", " + fmt(ev->result->wall_seconds) + " s)");
            } else {
              auto e = entry_for(*ev, "failure");
              e.error = std::get<std::string>(u);
              rr.per_client[ev->endpoint_id] = e;
              failed.insert(ev->endpoint_id);
              log("round " + std::to_string(r) + ": " + ev->endpoint_id + " failed: " + *e.error);
            }
            break;
          }
          case DispatchEvent::Kind::kExpired:
            if (now() < round_deadline) {
              const auto id = send_train(ev->endpoint_id, r, blob, task_deadline(round_deadline));
              log("round " + std::to_string(r) + ": task for " + ev->endpoint_id +
                  " expired, requeued as " + id);
            } else {
              log("round " + std::to_string(r) + ": task for " + ev->endpoint_id + " expired");
            }
            break;
          case DispatchEvent::Kind::kCancelled:
            rr.per_client[ev->endpoint_id] = entry_for(*ev, "cancelled");
            failed.insert(ev->endpoint_id);
            log("round " + std::to_string(r) + ": task for " + ev->endpoint_id +
                " cancelled (member removed)");
            break;
        }
      }
      if (cancel_requested()) return finish_cancelled();
      cancel_pending(TaskKind::kTrain);

      if (updates.size() < need) {
        std::vector<std::string> missing;
        for (const auto& ep : config_.roster) {
          if (!updates.contains(ep)) {
            missing.push_back(ep);
            if (!rr.per_client.contains(ep)) rr.per_client[ep].status = "missing";
          }
        }
        rr.finished_at = now();
        mutate([&](ExperimentRecord& rec) { rec.rounds.push_back(rr); });
        throw Error(ErrorCode::kQuorumNotReached,
                    "round " + std::to_string(r) + " got " + std::to_string(updates.size()) +
                        " of " + std::to_string(need) + " required results; missing: " +
                        join(missing));
      }

      // Roster order, not arrival order, so aggregation is reproducible.
      std::vector<ClientUpdate> ordered;
      last_train_seconds_.clear();
      for (const auto& ep : config_.roster) {
        if (auto it = updates.find(ep); it != updates.end()) {
          last_train_seconds_.push_back(it->second.metrics.train_seconds);
          ordered.push_back(std::move(it->second));
        }
      }
      state_ = aggregate(state_, ordered);
      log("round " + std::to_string(r) + ": aggregated " + std::to_string(ordered.size()) +
          " updates");

      evaluate_round(rr, upload(state_.global_model));
      rr.finished_at = now();
      mutate([&](ExperimentRecord& rec) { rec.rounds.push_back(rr); });
      log("round " + std::to_string(r) + " finished" +
          (rr.global_val_accuracy ? ": global val accuracy " + fmt(*rr.global_val_accuracy) +
                                        ", loss " + fmt(*rr.global_val_loss)
                                  : ": no global validation metrics"));
    }
    complete();
  }

  // Dispatches evaluate tasks with the new global model to the roster and
  // waits for all of them (or the round timeout).
  void evaluate_round(RoundRecord& rr, const std::string& blob) {
    const TimestampMs deadline = now() + round_timeout_ms();
    std::size_t outstanding = 0;
    for (const auto& ep : config_.roster) {
      send(ep, TaskKind::kEvaluate, rr.round, json{{"model_spec", to_json(config_.model_spec)},
                                                   {"loss", loss_kind_name(config_.loss)}},
           blob, deadline);
      ++outstanding;
    }
    while (outstanding > 0) {
      auto ev = next_event(deadline);
      if (!ev) break;
      const auto p = claim(*ev);
      if (!p) continue;
      if (p->kind == TaskKind::kDataHistogram) {
        if (ev->kind == DispatchEvent::Kind::kResult) record_histogram(*ev);
        continue;
      }
      if (p->kind != TaskKind::kEvaluate) continue;
      --outstanding;
      if (ev->kind == DispatchEvent::Kind::kResult) apply_evaluation(rr, *ev);
    }
    cancel_pending(TaskKind::kEvaluate);
    finalize_global(rr);
    if (!rr.global_val_accuracy) {
      log("warning: round " + std::to_string(rr.round) + ": no client returned validation metrics");
    }
  }

  // ---- asynchronous loop --------------------------------------------------

  void run_async() {
    std::set<std::string> active(config_.roster.begin(), config_.roster.end());
    const auto idle_timeout = round_timeout_ms();
    TimestampMs last_progress = now();
    std::string blob = upload(state_.global_model);
    for (const auto& ep : config_.roster) {
      send_train(ep, state_.round + 1, blob, task_deadline(now() + idle_timeout));
    }
    std::map<std::string, ClientRoundEntry> buffered_entries;  // FedBuff
    std::map<std::int64_t, std::size_t> evals_outstanding;
    std::vector<RoundRecord> rounds;

    const auto save_round = [&](std::int64_t round) {
      auto& rr = rounds[round - 1];
      finalize_global(rr);
      mutate([&](ExperimentRecord& rec) {
        if (static_cast<std::int64_t>(rec.rounds.size()) < round) {
          rec.rounds.push_back(rr);
        } else {
          rec.rounds[round - 1] = rr;
        }
      });
    };

    while (state_.round < config_.rounds && !active.empty()) {
      auto ev = next_event(last_progress + idle_timeout);
      if (!ev) {
        if (cancel_requested()) return finish_cancelled();
        throw Error(ErrorCode::kQuorumNotReached,
                    "no client result within " + fmt(config_.round_timeout_s) +
                        " s; active clients: " +
                        join(std::vector<std::string>(active.begin(), active.end())));
      }
      const auto p = claim(*ev);
      if (!p) continue;
      if (p->kind == TaskKind::kDataHistogram) {
        if (ev->kind == DispatchEvent::Kind::kResult) record_histogram(*ev);
        continue;
      }
      if (p->kind == TaskKind::kEvaluate) {
        if (ev->kind == DispatchEvent::Kind::kResult) apply_evaluation(rounds[p->round - 1], *ev);
        if (--evals_outstanding[p->round] == 0) save_round(p->round);
        continue;
      }
      // Train task.
      const auto& ep = ev->endpoint_id;
      if (ev->kind == DispatchEvent::Kind::kExpired) {
        send_train(ep, state_.round + 1, blob, task_deadline(now() + idle_timeout));
        log("task for " + ep + " expired, requeued");
        continue;
      }
      if (ev->kind == DispatchEvent::Kind::kCancelled) {
        active.erase(ep);
        log(ep + " retired: task cancelled (member removed)");
        continue;
      }
      auto u = to_update(*ev, p->round);
      if (auto* err = std::get_if<std::string>(&u)) {
        active.erase(ep);
        log(ep + " retired after failure: " + *err);
        continue;
      }
      last_progress = now();
      auto update = std::get<ClientUpdate>(std::move(u));
      const std::int64_t staleness = state_.round - update.base_round;
      auto entry = entry_for(*ev, "success");
      entry.staleness = staleness;
      bool emitted = true;
      if (config_.algorithm == Algorithm::kFedAsync) {
        state_ = step_fedasync(state_, update);
        log("applied update from " + ep + " with staleness " + std::to_string(staleness) +
            " (weight " +
            fmt(staleness_weight(config_.aggregator_hyper.async_alpha,
                                 config_.aggregator_hyper.staleness_exponent, staleness)) +
            ")");
        buffered_entries = {{ep, entry}};
      } else {
        auto out = step_fedbuff(state_, update);
        state_ = std::move(out.state);
        emitted = out.emitted;
        buffered_entries[ep] = entry;
        log("buffered update from " + ep + " (staleness " + std::to_string(staleness) + ", " +
            std::to_string(state_.buffer.size()) + "/" +
            std::to_string(config_.aggregator_hyper.buffer_size) + ")");
      }
      if (emitted) {
        RoundRecord rr;
        rr.round = state_.round;
        rr.started_at = round_started_;
        rr.finished_at = now();
        rr.client_lr_used = config_.lr_for_round(rr.round);
        rr.per_client = std::move(buffered_entries);
        buffered_entries.clear();
        round_started_ = now();
        blob = upload(state_.global_model);
        rounds.push_back(rr);
        log("aggregation " + std::to_string(rr.round) + " applied");
        const auto deadline = now() + idle_timeout;
        for (const auto& e : config_.roster) {
          send(e, TaskKind::kEvaluate, rr.round,
               json{{"model_spec", to_json(config_.model_spec)},
                    {"loss", loss_kind_name(config_.loss)}},
               blob, deadline);
        }
        evals_outstanding[rr.round] = config_.roster.size();
        save_round(rr.round);
      }
      if (state_.round < config_.rounds) {
        send_train(ep, state_.round + 1, blob, task_deadline(now() + idle_timeout));
      }
    }
    if (cancel_requested()) return finish_cancelled();
    cancel_pending(TaskKind::kTrain);
    if (state_.round < config_.rounds) {
      throw Error(ErrorCode::kQuorumNotReached,
                  "all clients failed after " + std::to_string(state_.round) + " aggregations");
    }

    // Drain outstanding evaluations.
    const TimestampMs deadline = now() + idle_timeout;
    auto open = [&] {
      std::size_t k = 0;
      for (const auto& [r, c] : evals_outstanding) k += c;
      return k;
    };
    while (open() > 0) {
      auto ev = next_event(deadline);
      if (!ev) break;
      const auto p = claim(*ev);
      if (!p || p->kind != TaskKind::kEvaluate) continue;
      if (ev->kind == DispatchEvent::Kind::kResult) apply_evaluation(rounds[p->round - 1], *ev);
      if (--evals_outstanding[p->round] == 0) save_round(p->round);
    }
    for (const auto& [r, c] : evals_outstanding) {
      if (c > 0) save_round(r);
    }
    cancel_pending(TaskKind::kEvaluate);
    complete();
  }

  void complete() {
    const auto digest = upload(state_.global_model);
    mutate([&](ExperimentRecord& r) { r.final_model = digest; });
    finish(ExperimentStatus::kFinished, std::nullopt);
  }

  void finish_cancelled() {
    cancel_all_pending();
    finish(ExperimentStatus::kCancelled, std::string("cancelled by administrator"));
  }

  Orchestrator& o_;
  std::shared_ptr<Run> run_;
  const ExperimentConfig config_;
  AggregatorState state_;
  std::map<std::string, Pending> pending_;
  std::vector<double> last_train_seconds_;
  TimestampMs round_started_ = 0;
};

Orchestrator::Orchestrator(IdentityService& iam, Dispatch& dispatch, ExperimentStore& store,
                           const Clock& clock, OrchestratorOptions options)
    : iam_(iam), dispatch_(dispatch), store_(store), clock_(clock), options_(options) {
  for (auto& record : store_.load_all()) {
    auto run = std::make_shared<Run>();
    if (!is_terminal(record.status)) {
      const LogLine line{clock_.now_ms(),
                         "orchestrator restarted; experiment marked failed after " +
                             std::to_string(record.rounds.size()) + " completed rounds"};
      store_.append_log(record.config.experiment_id, line);
      record.log.push_back(line);
      record.status = ExperimentStatus::kFailed;
      record.failure_reason = "orchestrator restarted while the experiment was running";
      auto persisted = record;
      persisted.log.clear();
      store_.save(persisted);
    }
    run->record = std::move(record);
    runs_[run->record.config.experiment_id] = run;
  }
}

Orchestrator::~Orchestrator() { shutdown(); }

void Orchestrator::shutdown() {
  stopping_ = true;
  std::vector<std::shared_ptr<Run>> runs;
  {
    std::lock_guard lock(runs_mu_);
    for (auto& [id, r] : runs_) runs.push_back(r);
  }
  for (auto& r : runs) {
    bool live = false;
    {
      std::lock_guard lock(r->mu);
      r->stop_requested = true;
      live = !is_terminal(r->record.status);
    }
    r->cv.notify_all();
    if (r->thread.joinable()) r->thread.join();
    if (live) {
      const LogLine line{clock_.now_ms(), "server shutting down; experiment marked failed"};
      ExperimentRecord snapshot;
      {
        std::lock_guard lock(r->mu);
        if (is_terminal(r->record.status)) continue;
        r->record.log.push_back(line);
        r->record.status = ExperimentStatus::kFailed;
        r->record.failure_reason = "server shut down while the experiment was running";
        snapshot = r->record;
      }
      store_.append_log(snapshot.config.experiment_id, line);
      snapshot.log.clear();
      store_.save(snapshot);
      r->cv.notify_all();
    }
  }
}

std::shared_ptr<Orchestrator::Run> Orchestrator::find(const std::string& id) const {
  std::lock_guard lock(runs_mu_);
  const auto it = runs_.find(id);
  if (it == runs_.end()) throw Error(ErrorCode::kNoSuchExperiment, "no experiment " + id);
  return it->second;
}

std::shared_ptr<Orchestrator::Run> Orchestrator::authorized(const std::string& token,
                                                            const std::string& id,
                                                            Role role) const {
  iam_.authenticate(token);  // Unauthorized before NoSuchExperiment
  auto run = find(id);
  std::string fed;
  {
    std::lock_guard lock(run->mu);
    fed = run->record.config.federation_id;
  }
  iam_.authorize(token, fed, role, Scope::kApi);
  return run;
}

void Orchestrator::check_roster(const ExperimentConfig& config) const {
  std::map<std::string, std::string> bad;
  std::vector<std::string> offline;
  for (const auto& ep : config.roster) {
    try {
      const auto rec = dispatch_.endpoint(ep);
      if (rec.federation_id != config.federation_id) {
        bad["roster"] = "endpoint " + ep + " belongs to another federation";
        continue;
      }
      if (dispatch_.status_of(ep) == EndpointStatus::kOffline) offline.push_back(ep);
    } catch (const Error&) {
      bad["roster"] = "endpoint " + ep + " is not registered";
    }
  }
  if (!bad.empty()) throw Error(ErrorCode::kInvalidConfig, "invalid experiment config", bad);
  if (!offline.empty()) {
    std::map<std::string, std::string> fields;
    for (const auto& ep : offline) fields[ep] = "offline";
    throw Error(ErrorCode::kEndpointOffline, "offline endpoints: " + join(offline), fields);
  }
}

ExperimentRecord Orchestrator::launch(const std::string& token, ExperimentConfig config) {
  if (stopping_) throw Error(ErrorCode::kInvalidState, "server is shutting down");
  const auto account = iam_.authorize(token, config.federation_id, Role::kAdmin, Scope::kApi);
  config.validate();
  check_roster(config);

  auto run = std::make_shared<Run>();
  {
    std::lock_guard lock(runs_mu_);
    if (config.experiment_id.empty()) {
      config.experiment_id = crypto::random_id("exp");
    } else if (runs_.contains(config.experiment_id)) {
      throw Error(ErrorCode::kInvalidConfig, "invalid experiment config",
                  {{"experiment_id", "already in use"}});
    }
    run->record.config = config;
    run->record.status = ExperimentStatus::kRunning;
    run->record.created_by = account;
    run->record.created_at = clock_.now_ms();
    runs_[config.experiment_id] = run;
  }
  auto persisted = run->record;
  store_.save(persisted);
  dispatch_.set_listener(config.experiment_id, [run](const DispatchEvent& ev) {
    {
      std::lock_guard lock(run->mu);
      run->inbox.push_back(ev);
    }
    run->cv.notify_all();
  });
  run->thread = std::thread(Supervisor(*this, run));
  std::lock_guard lock(run->mu);
  return run->record;
}

ExperimentRecord Orchestrator::get(const std::string& token, const std::string& id) const {
  auto run = authorized(token, id, Role::kMember);
  std::lock_guard lock(run->mu);
  return run->record;
}

std::vector<ExperimentRecord> Orchestrator::list(const std::string& token,
                                                 const std::string& federation_id) const {
  iam_.authorize(token, federation_id, Role::kMember, Scope::kApi);
  std::vector<std::shared_ptr<Run>> runs;
  {
    std::lock_guard lock(runs_mu_);
    for (const auto& [id, r] : runs_) runs.push_back(r);
  }
  std::vector<ExperimentRecord> out;
  for (const auto& r : runs) {
    std::lock_guard lock(r->mu);
    if (r->record.config.federation_id == federation_id) out.push_back(r->record);
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.created_at < b.created_at; });
  return out;
}

LogChunk Orchestrator::stream_logs(const std::string& token, const std::string& id,
                                   std::size_t from_line, std::int64_t wait_ms) const {
  auto run = authorized(token, id, Role::kMember);
  std::unique_lock lock(run->mu);
  run->cv.wait_for(lock, std::chrono::milliseconds(std::max<std::int64_t>(0, wait_ms)), [&] {
    return run->record.log.size() > from_line || is_terminal(run->record.status) ||
           run->stop_requested;
  });
  LogChunk chunk;
  const auto& log = run->record.log;
  for (std::size_t i = from_line; i < log.size(); ++i) chunk.lines.push_back(log[i]);
  chunk.next_line = std::max(from_line, log.size());
  chunk.status = run->record.status;
  return chunk;
}

void Orchestrator::cancel(const std::string& token, const std::string& id) {
  auto run = authorized(token, id, Role::kAdmin);
  {
    std::lock_guard lock(run->mu);
    if (is_terminal(run->record.status)) {
      throw Error(ErrorCode::kInvalidState,
                  "experiment is already " +
                      std::string(experiment_status_name(run->record.status)));
    }
    run->cancel_requested = true;
  }
  run->cv.notify_all();
}

ExperimentStatus Orchestrator::wait(const std::string& id, std::int64_t timeout_ms) const {
  auto run = find(id);
  std::unique_lock lock(run->mu);
  run->cv.wait_for(lock, std::chrono::milliseconds(timeout_ms),
                   [&] { return is_terminal(run->record.status); });
  return run->record.status;
}

json Orchestrator::report(const std::string& token, const std::string& id) const {
  const auto rec = get(token, id);
  json rows = json::array();
  for (const auto& rr : rec.rounds) {
    json clients = json::object();
    for (const auto& [ep, e] : rr.per_client) {
      clients[ep] = {{"status", e.status},
                     {"train_accuracy", e.metrics.accuracy},
                     {"train_loss", e.metrics.loss},
                     {"val_accuracy", e.val_accuracy ? json(*e.val_accuracy) : json(nullptr)},
                     {"wall_seconds", e.wall_seconds}};
    }
    rows.push_back({{"round", rr.round},
                    {"global_val_accuracy",
                     rr.global_val_accuracy ? json(*rr.global_val_accuracy) : json(nullptr)},
                    {"global_val_loss",
                     rr.global_val_loss ? json(*rr.global_val_loss) : json(nullptr)},
                    {"client_lr_used", rr.client_lr_used},
                    {"clients", clients}});
  }
  const auto& p = rec.config.privacy;
  json privacy = {{"mechanism", privacy_mechanism_name(p.mechanism)}};
  if (p.mechanism != PrivacyMechanism::kNone) {
    // Basic sequential composition over the rounds each client took part in.
    privacy["epsilon_per_round"] = p.epsilon;
    privacy["clip_norm"] = p.clip_norm;
    privacy["rounds_completed"] = rec.rounds.size();
    privacy["composed_epsilon"] = p.epsilon * static_cast<double>(rec.rounds.size());
    privacy["planned_composed_epsilon"] = p.epsilon * rec.config.rounds;
  }
  return {{"experiment_id", rec.config.experiment_id},
          {"name", rec.config.name},
          {"status", experiment_status_name(rec.status)},
          {"config", to_json(rec.config)},
          {"rounds", rows},
          {"final_model", rec.final_model ? json(*rec.final_model) : json(nullptr)},
          {"data_histograms", rec.data_histograms},
          {"privacy", privacy},
          {"failure_reason", rec.failure_reason ? json(*rec.failure_reason) : json(nullptr)}};
}

json Orchestrator::compare(const std::string& token, const std::vector<std::string>& ids) const {
  if (ids.empty()) throw Error(ErrorCode::kInvalidArgument, "compare needs experiment ids");
  std::vector<ExperimentRecord> recs;
  for (const auto& id : ids) recs.push_back(get(token, id));
  for (const auto& r : recs) {
    if (r.config.federation_id != recs[0].config.federation_id) {
      throw Error(ErrorCode::kInvalidArgument,
                  "experiments from different federations cannot be compared");
    }
  }
  std::size_t max_rounds = 0;
  json series = json::array();
  for (const auto& r : recs) {
    json acc = json::array(), loss = json::array();
    for (const auto& rr : r.rounds) {
      acc.push_back(rr.global_val_accuracy ? json(*rr.global_val_accuracy) : json(nullptr));
      loss.push_back(rr.global_val_loss ? json(*rr.global_val_loss) : json(nullptr));
    }
    max_rounds = std::max(max_rounds, r.rounds.size());
    series.push_back({{"experiment_id", r.config.experiment_id},
                      {"name", r.config.name},
                      {"algorithm", algorithm_name(r.config.algorithm)},
                      {"status", experiment_status_name(r.status)},
                      {"global_val_accuracy", acc},
                      {"global_val_loss", loss}});
  }
  json rounds = json::array();
  for (std::size_t i = 1; i <= max_rounds; ++i) rounds.push_back(i);
  return {{"rounds", rounds}, {"series", series}};
}

std::map<std::string, DistributionEntry> Orchestrator::collect_data_distribution(
    const std::string& token, const std::string& federation_id,
    const std::vector<std::string>& roster, std::int64_t timeout_ms) {
  iam_.authorize(token, federation_id, Role::kAdmin, Scope::kApi);
  ExperimentConfig probe;
  probe.federation_id = federation_id;
  probe.roster = roster;
  if (roster.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "roster must list at least one endpoint");
  }
  check_roster(probe);

  struct Collect {
    std::mutex mu;
    std::condition_variable cv;
    std::map<std::string, DistributionEntry> got;
    std::set<std::string> failed;
  };
  auto c = std::make_shared<Collect>();
  const auto key = crypto::random_id("dist");
  dispatch_.set_listener(key, [c](const DispatchEvent& ev) {
    std::lock_guard lock(c->mu);
    if (ev.kind == DispatchEvent::Kind::kResult && ev.result->status == TaskStatus::kSuccess) {
      DistributionEntry e;
      if (ev.result->payload.contains("histogram")) {
        e.counts = ev.result->payload.at("histogram").get<std::vector<std::int64_t>>();
      }
      std::int64_t total = 0;
      for (auto x : e.counts) total += x;
      e.empty = total == 0;
      c->got[ev.endpoint_id] = e;
    } else {
      c->failed.insert(ev.endpoint_id);
    }
    c->cv.notify_all();
  });
  std::vector<std::string> tasks;
  const auto deadline = clock_.now_ms() + timeout_ms;
  for (const auto& ep : roster) {
    TaskEnvelope env;
    env.task_id = crypto::random_id("task");
    env.experiment_id = key;
    env.kind = TaskKind::kDataHistogram;
    env.deadline = deadline;
    dispatch_.enqueue_task(ep, federation_id, env);
    tasks.push_back(env.task_id);
  }
  const auto stop_at = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  {
    std::unique_lock lock(c->mu);
    while (c->got.size() + c->failed.size() < roster.size() &&
           std::chrono::steady_clock::now() < stop_at) {
      c->cv.wait_for(lock, std::chrono::milliseconds(options_.tick_ms));
      lock.unlock();
      dispatch_.sweep();
      lock.lock();
    }
  }
  dispatch_.remove_listener(key);
  for (const auto& t : tasks) dispatch_.cancel_task(t);
  std::lock_guard lock(c->mu);
  if (c->got.size() < roster.size()) {
    std::vector<std::string> missing;
    for (const auto& ep : roster) {
      if (!c->got.contains(ep)) missing.push_back(ep);
    }
    throw Error(ErrorCode::kEndpointOffline, "no data histogram from: " + join(missing));
  }
  return c->got;
}

}  // namespace fedsilo
