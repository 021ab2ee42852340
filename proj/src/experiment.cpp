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

#include "fedsilo/experiment.hpp"

#include <cmath>
#include <set>

#include "fedsilo/error.hpp"
#include "fedsilo/wire.hpp"

namespace fedsilo {

using nlohmann::json;

namespace {

using FieldErrors = std::map<std::string, std::string>;

// Reads typed fields out of one JSON object, collecting type errors under
// "<prefix><key>" instead of throwing on the first one.
class FieldReader {
 public:
  FieldReader(const json& j, std::string prefix, FieldErrors& errors)
      : j_(j), prefix_(std::move(prefix)), errors_(errors) {
    if (!j_.is_object()) errors_[prefix_.empty() ? "$" : trimmed()] = "must be an object";
  }

  bool has(const char* key) const {
    return j_.is_object() && j_.contains(key) && !j_.at(key).is_null();
  }

  void missing(const char* key) { errors_[prefix_ + key] = "is required"; }

  template <class T>
  void req(const char* key, T& out) {
    if (!has(key)) return missing(key);
    read(key, out);
  }

  template <class T>
  void opt(const char* key, T& out) {
    if (has(key)) read(key, out);
  }

  template <class T, class Parse>
  void enumeration(const char* key, T& out, Parse parse, bool required) {
    if (!has(key)) {
      if (required) missing(key);
      return;
    }
    const auto& v = j_.at(key);
    if (!v.is_string()) {
      errors_[prefix_ + key] = "must be a string";
      return;
    }
    try {
      out = parse(v.get<std::string>());
    } catch (const Error& e) {
      errors_[prefix_ + key] = e.what();
    }
  }

  const json& at(const char* key) const { return j_.at(key); }
  std::string path(const char* key) const { return prefix_ + key; }

 private:
  std::string trimmed() const { return prefix_.substr(0, prefix_.size() - 1); }

  void read(const char* key, std::string& out) {
    const auto& v = j_.at(key);
    if (!v.is_string()) return fail(key, "must be a string");
    out = v.get<std::string>();
  }
  void read(const char* key, double& out) {
    const auto& v = j_.at(key);
    if (!v.is_number()) return fail(key, "must be a number");
    out = v.get<double>();
  }
  template <class I>
    requires std::is_integral_v<I>
  void read(const char* key, I& out) {
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) return fail(key, "must be an integer");
    if constexpr (std::is_unsigned_v<I>) {
      if (v.is_number_unsigned() || v.get<std::int64_t>() >= 0) {
        out = v.get<I>();
        return;
      }
      return fail(key, "must be a non-negative integer");
    } else {
      out = v.get<I>();
    }
  }
  void read(const char* key, std::vector<std::string>& out) {
    const auto& v = j_.at(key);
    if (!v.is_array()) return fail(key, "must be an array of strings");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_string()) return fail(key, "must be an array of strings");
      out.push_back(e.get<std::string>());
    }
  }
  void read(const char* key, std::vector<std::uint32_t>& out) {
    const auto& v = j_.at(key);
    if (!v.is_array()) return fail(key, "must be an array of non-negative integers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number_integer() || (!e.is_number_unsigned() && e.get<std::int64_t>() < 0)) {
        return fail(key, "must be an array of non-negative integers");
      }
      out.push_back(e.get<std::uint32_t>());
    }
  }
  void read(const char* key, std::filesystem::path& out) {
    std::string s;
    read(key, s);
    out = s;
  }

  void fail(const char* key, const char* why) { errors_[prefix_ + key] = why; }

  const json& j_;
  std::string prefix_;
  FieldErrors& errors_;
};

void merge_validation(FieldErrors& errors, const std::string& prefix,
                      const std::function<void()>& validate) {
  try {
    validate();
  } catch (const Error& e) {
    if (e.fields().empty()) {
      errors[prefix.empty() ? "$" : prefix.substr(0, prefix.size() - 1)] = e.what();
    }
    for (const auto& [k, v] : e.fields()) {
      // Model spec keys are already qualified.
      errors[k.starts_with(prefix) ? k : prefix + k] = v;
    }
  }
}

ModelSpec read_model_spec(const json& j, const std::string& prefix, FieldErrors& errors) {
  ModelSpec s;
  FieldReader r(j, prefix, errors);
  r.enumeration("kind", s.kind, model_kind_from_name, true);
  r.req("input_shape", s.input_shape);
  r.opt("num_classes", s.num_classes);
  r.opt("hidden_sizes", s.hidden_sizes);
  r.opt("channels", s.channels);
  r.opt("kernel_sizes", s.kernel_sizes);
  r.opt("init_seed", s.init_seed);
  return s;
}

PrivacyConfig read_privacy(const json& j, const std::string& prefix, FieldErrors& errors) {
  PrivacyConfig p;
  FieldReader r(j, prefix, errors);
  r.enumeration("mechanism", p.mechanism, privacy_mechanism_from_name, false);
  r.opt("epsilon", p.epsilon);
  r.opt("clip_norm", p.clip_norm);
  if (r.has("noise_seed")) {
    std::uint64_t seed = 0;
    r.opt("noise_seed", seed);
    p.noise_seed = seed;
  }
  return p;
}

AggregatorHyper read_hyper(const json& j, const std::string& prefix, FieldErrors& errors) {
  AggregatorHyper h;
  FieldReader r(j, prefix, errors);
  r.opt("server_lr", h.server_lr);
  r.opt("server_momentum", h.server_momentum);
  r.opt("beta1", h.beta1);
  r.opt("beta2", h.beta2);
  r.opt("adaptivity", h.adaptivity);
  r.opt("async_alpha", h.async_alpha);
  r.opt("staleness_exponent", h.staleness_exponent);
  r.opt("buffer_size", h.buffer_size);
  return h;
}

void throw_if(const FieldErrors& errors, const char* what) {
  if (!errors.empty()) throw Error(ErrorCode::kInvalidConfig, what, errors);
}

json optional_json(const auto& v) { return v ? json(*v) : json(nullptr); }

template <class T>
std::optional<T> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

std::string_view experiment_status_name(ExperimentStatus s) {
  switch (s) {
    case ExperimentStatus::kCreated:
      return "created";
    case ExperimentStatus::kRunning:
      return "running";
    case ExperimentStatus::kFinished:
      return "finished";
    case ExperimentStatus::kFailed:
      return "failed";
    case ExperimentStatus::kCancelled:
      return "cancelled";
  }
  return "failed";
}

ExperimentStatus experiment_status_from_name(std::string_view s) {
  for (auto st : {ExperimentStatus::kCreated, ExperimentStatus::kRunning,
                  ExperimentStatus::kFinished, ExperimentStatus::kFailed,
                  ExperimentStatus::kCancelled}) {
    if (experiment_status_name(st) == s) return st;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown experiment status '" + std::string(s) + "'");
}

bool is_terminal(ExperimentStatus s) {
  return s == ExperimentStatus::kFinished || s == ExperimentStatus::kFailed ||
         s == ExperimentStatus::kCancelled;
}

void ExperimentConfig::validate() const {
  FieldErrors bad;
  if (federation_id.empty()) bad["federation_id"] = "is required";
  if (name.empty()) bad["name"] = "is required";
  if (rounds < 1) bad["rounds"] = "must be >= 1";
  if (local_epochs < 1) bad["local_epochs"] = "must be >= 1";
  if (batch_size < 1) bad["batch_size"] = "must be >= 1";
  if (!(client_lr > 0.0) || !std::isfinite(client_lr)) bad["client_lr"] = "must be > 0";
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) bad["lr_decay"] = "must be in (0, 1]";
  if (!(quorum_fraction > 0.0 && quorum_fraction <= 1.0)) {
    bad["quorum_fraction"] = "must be in (0, 1]";
  }
  if (!(round_timeout_s > 0.0) || !std::isfinite(round_timeout_s)) {
    bad["round_timeout_s"] = "must be > 0";
  }
  if (roster.empty()) {
    bad["roster"] = "must list at least one endpoint";
  } else if (std::set<std::string>(roster.begin(), roster.end()).size() != roster.size()) {
    bad["roster"] = "must not repeat endpoints";
  }
  merge_validation(bad, "", [&] { model_spec.validate(); });
  merge_validation(bad, "aggregator_hyper.", [&] { aggregator_hyper.validate(); });
  merge_validation(bad, "privacy.", [&] { privacy.validate(); });
  throw_if(bad, "invalid experiment config");
}

double ExperimentConfig::lr_for_round(std::int64_t round) const {
  return client_lr * std::pow(lr_decay, static_cast<double>(round - 1));
}

ExperimentConfig parse_experiment_config(const json& j) {
  FieldErrors bad;
  ExperimentConfig c;
  FieldReader r(j, "", bad);
  throw_if(bad, "experiment config must be a JSON object");
  r.opt("experiment_id", c.experiment_id);
  r.req("federation_id", c.federation_id);
  r.req("name", c.name);
  r.enumeration("algorithm", c.algorithm, algorithm_from_name, true);
  if (r.has("model_spec")) {
    c.model_spec = read_model_spec(r.at("model_spec"), "model_spec.", bad);
  } else {
    r.missing("model_spec");
  }
  r.enumeration("loss", c.loss, loss_kind_from_name, false);
  r.req("rounds", c.rounds);
  r.req("local_epochs", c.local_epochs);
  r.req("batch_size", c.batch_size);
  r.req("client_lr", c.client_lr);
  r.opt("lr_decay", c.lr_decay);
  if (r.has("aggregator_hyper")) {
    c.aggregator_hyper = read_hyper(r.at("aggregator_hyper"), "aggregator_hyper.", bad);
  }
  if (r.has("privacy")) c.privacy = read_privacy(r.at("privacy"), "privacy.", bad);
  r.req("roster", c.roster);
  r.opt("quorum_fraction", c.quorum_fraction);
  r.opt("round_timeout_s", c.round_timeout_s);
  r.opt("seed", c.seed);
  throw_if(bad, "invalid experiment config");
  c.validate();
  return c;
}

json to_json(const ModelSpec& s) {
  return {{"kind", model_kind_name(s.kind)},     {"input_shape", s.input_shape},
          {"num_classes", s.num_classes},        {"hidden_sizes", s.hidden_sizes},
          {"channels", s.channels},              {"kernel_sizes", s.kernel_sizes},
          {"init_seed", s.init_seed}};
}

ModelSpec parse_model_spec(const json& j) {
  FieldErrors bad;
  auto s = read_model_spec(j, "model_spec.", bad);
  throw_if(bad, "invalid model spec");
  s.validate();
  return s;
}

json to_json(const PrivacyConfig& p) {
  return {{"mechanism", privacy_mechanism_name(p.mechanism)},
          {"epsilon", p.epsilon},
          {"clip_norm", p.clip_norm},
          {"noise_seed", optional_json(p.noise_seed)}};
}

PrivacyConfig parse_privacy_config(const json& j) {
  FieldErrors bad;
  auto p = read_privacy(j, "privacy.", bad);
  throw_if(bad, "invalid privacy config");
  p.validate();
  return p;
}

json to_json(const DataLoaderSpec& s) {
  json j = {{"format", s.format == DataFormat::kCsv ? "csv" : "mnist_idx"},
            {"val_fraction", s.val_fraction},
            {"shuffle_seed", s.shuffle_seed},
            {"normalization", s.normalization == Normalization::kNone ? "none" : "scale_0_1"},
            {"num_classes", s.num_classes}};
  if (s.format == DataFormat::kCsv) {
    j["train_csv"] = s.train_csv.string();
  } else {
    j["train_images"] = s.train_images.string();
    j["train_labels"] = s.train_labels.string();
  }
  return j;
}

DataLoaderSpec parse_data_loader_spec(const json& j) {
  FieldErrors bad;
  DataLoaderSpec s;
  FieldReader r(j, "data.", bad);
  r.enumeration(
      "format", s.format,
      [](const std::string& v) {
        if (v == "mnist_idx") return DataFormat::kMnistIdx;
        if (v == "csv") return DataFormat::kCsv;
        throw Error(ErrorCode::kInvalidConfig, "unknown data format '" + v + "'");
      },
      true);
  r.opt("train_images", s.train_images);
  r.opt("train_labels", s.train_labels);
  r.opt("train_csv", s.train_csv);
  r.opt("val_fraction", s.val_fraction);
  r.opt("shuffle_seed", s.shuffle_seed);
  r.enumeration(
      "normalization", s.normalization,
      [](const std::string& v) {
        if (v == "none") return Normalization::kNone;
        if (v == "scale_0_1") return Normalization::kScale01;
        throw Error(ErrorCode::kInvalidConfig, "unknown normalization '" + v + "'");
      },
      false);
  r.opt("num_classes", s.num_classes);
  throw_if(bad, "invalid data loader spec");
  merge_validation(bad, "data.", [&] { s.validate(); });
  throw_if(bad, "invalid data loader spec");
  return s;
}

json to_json(const ExperimentConfig& c) {
  json roster = json::array();
  for (const auto& e : c.roster) roster.push_back(e);
  json hyper;
  to_json(hyper, c.aggregator_hyper);
  return {{"experiment_id", c.experiment_id},
          {"federation_id", c.federation_id},
          {"name", c.name},
          {"algorithm", algorithm_name(c.algorithm)},
          {"model_spec", to_json(c.model_spec)},
          {"loss", loss_kind_name(c.loss)},
          {"rounds", c.rounds},
          {"local_epochs", c.local_epochs},
          {"batch_size", c.batch_size},
          {"client_lr", c.client_lr},
          {"lr_decay", c.lr_decay},
          {"aggregator_hyper", hyper},
          {"privacy", to_json(c.privacy)},
          {"roster", roster},
          {"quorum_fraction", c.quorum_fraction},
          {"round_timeout_s", c.round_timeout_s},
          {"seed", c.seed}};
}

json to_json(const RoundRecord& r) {
  json clients = json::object();
  for (const auto& [id, e] : r.per_client) {
    json m;
    to_json(m, e.metrics);
    clients[id] = {{"status", e.status},
                   {"metrics", m},
                   {"wall_seconds", e.wall_seconds},
                   {"staleness", optional_json(e.staleness)},
                   {"val_accuracy", optional_json(e.val_accuracy)},
                   {"val_loss", optional_json(e.val_loss)},
                   {"val_samples", optional_json(e.val_samples)},
                   {"error", optional_json(e.error)}};
  }
  return {{"round", r.round},
          {"per_client", clients},
          {"global_val_accuracy", optional_json(r.global_val_accuracy)},
          {"global_val_loss", optional_json(r.global_val_loss)},
          {"started_at", r.started_at},
          {"finished_at", r.finished_at},
          {"client_lr_used", r.client_lr_used}};
}

RoundRecord round_record_from_json(const json& j) {
  RoundRecord r;
  j.at("round").get_to(r.round);
  for (const auto& [id, e] : j.at("per_client").items()) {
    ClientRoundEntry c;
    e.at("status").get_to(c.status);
    from_json(e.at("metrics"), c.metrics);
    e.at("wall_seconds").get_to(c.wall_seconds);
    c.staleness = optional_from<std::int64_t>(e, "staleness");
    c.val_accuracy = optional_from<double>(e, "val_accuracy");
    c.val_loss = optional_from<double>(e, "val_loss");
    c.val_samples = optional_from<std::int64_t>(e, "val_samples");
    c.error = optional_from<std::string>(e, "error");
    r.per_client[id] = std::move(c);
  }
  r.global_val_accuracy = optional_from<double>(j, "global_val_accuracy");
  r.global_val_loss = optional_from<double>(j, "global_val_loss");
  j.at("started_at").get_to(r.started_at);
  j.at("finished_at").get_to(r.finished_at);
  j.at("client_lr_used").get_to(r.client_lr_used);
  return r;
}

json to_json(const ExperimentRecord& r, bool include_log) {
  json rounds = json::array();
  for (const auto& rr : r.rounds) rounds.push_back(to_json(rr));
  json j = {{"experiment_id", r.config.experiment_id},
            {"config", to_json(r.config)},
            {"status", experiment_status_name(r.status)},
            {"rounds", rounds},
            {"final_model", optional_json(r.final_model)},
            {"data_histograms", r.data_histograms},
            {"created_by", r.created_by},
            {"created_at", r.created_at},
            {"failure_reason", optional_json(r.failure_reason)},
            {"log_lines", r.log.size()}};
  if (include_log) {
    json log = json::array();
    for (const auto& l : r.log) log.push_back({{"ts", l.ts}, {"text", l.text}});
    j["log"] = log;
  }
  return j;
}

ExperimentRecord experiment_record_from_json(const json& j) {
  ExperimentRecord r;
  r.config = parse_experiment_config(j.at("config"));
  r.status = experiment_status_from_name(j.at("status").get<std::string>());
  for (const auto& rr : j.at("rounds")) r.rounds.push_back(round_record_from_json(rr));
  r.final_model = optional_from<std::string>(j, "final_model");
  if (j.contains("data_histograms")) {
    j.at("data_histograms").get_to(r.data_histograms);
  }
  j.at("created_by").get_to(r.created_by);
  j.at("created_at").get_to(r.created_at);
  r.failure_reason = optional_from<std::string>(j, "failure_reason");
  if (j.contains("log")) {
    for (const auto& l : j.at("log")) {
      r.log.push_back({l.at("ts").get<TimestampMs>(), l.at("text").get<std::string>()});
    }
  }
  return r;
}

std::string experiment_config_template() {
  return R"(// fedsilo experiment config. Comments are allowed; remove them or keep them.
{
  // Leave empty to let the server assign an id.
  "experiment_id": "",
  "federation_id": "fed_REPLACE_ME",
  "name": "mnist-fedavgm",
  // FedAvg | FedAvgM | FedAdagrad | FedAdam | FedYogi | FedAsync | FedBuff
  "algorithm": "FedAvgM",
  "model_spec": {
    // logistic_regression | mlp | cnn2
    "kind": "cnn2",
    "input_shape": [1, 28, 28],
    "num_classes": 10,
    "hidden_sizes": [64],
    "channels": [8, 16],
    "kernel_sizes": [5, 5],
    "init_seed": 1
  },
  // cross_entropy | mse
  "loss": "cross_entropy",
  "rounds": 10,
  "local_epochs": 2,
  "batch_size": 64,
  "client_lr": 0.01,
  // Round r trains with client_lr * lr_decay^(r-1).
  "lr_decay": 0.975,
  "aggregator_hyper": {
    "server_lr": 1.0,
    "server_momentum": 0.9,
    "beta1": 0.9,
    "beta2": 0.99,
    "adaptivity": 0.001,
    "async_alpha": 0.9,
    "staleness_exponent": 0.5,
    "buffer_size": 3
  },
  // mechanism none | laplace; epsilon is spent per round.
  "privacy": { "mechanism": "none", "epsilon": 1.0, "clip_norm": 1.0, "noise_seed": null },
  // Endpoint ids from `fedsilo endpoints list`.
  "roster": ["ep_REPLACE_ME_1", "ep_REPLACE_ME_2"],
  "quorum_fraction": 1.0,
  "round_timeout_s": 600,
  "seed": 7
}
)";
}

}  // namespace fedsilo
