/*
 * Copyright 2026 The dpfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef DPFED_HARNESS_CONFIG_HPP_
#define DPFED_HARNESS_CONFIG_HPP_

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpfed/error.hpp"
#include "dpfed/federation.hpp"
#include "dpfed/mechanisms.hpp"

namespace dpfed::harness {

using Json = nlohmann::ordered_json;

struct DatasetConfig {
  std::string source = "synthetic";  // "synthetic" or "idx"
  std::size_t samples = 2000;        // synthetic training rows
  std::size_t test_samples = 500;
  std::size_t features = 10;
  std::size_t classes = 10;
  double separation = 3.0;
  double scale = 1.0;  // multiplies every synthetic feature
  std::uint64_t seed = 1;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::size_t limit = 0;  // keep the first `limit` training rows; 0 keeps all
};

struct PartitionConfig {
  std::size_t clients = 10;
  std::size_t classes_per_client = 2;
  bool equal_sizes = true;
  double data_fraction = 1.0;
};

struct ScheduleConfig {
  std::optional<std::size_t> participants;  // empty means "auto"
  std::optional<std::size_t> rounds;        // empty means "auto"
  std::optional<double> mu;
  std::optional<double> lambda;
  SelectionMode selection = SelectionMode::kRoundRobin;
  double T_cap = 1e4;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  PartitionConfig partition;
  double l2 = 0.05;
  DpMechanismSpec mechanism;
  std::vector<PrivacyBudget> budgets;  // one per client after parsing
  ScheduleConfig schedule;
  std::string constants_path;  // bound constants for "auto"; estimated when empty
  std::size_t repeat = 1;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 picks the hardware concurrency
  std::string output_dir = "out";

  bool auto_schedule() const { return !schedule.participants || !schedule.rounds; }
};

// Trial k runs with this base seed.
inline std::uint64_t TrialSeed(std::uint64_t base, std::size_t trial) {
  return base + static_cast<std::uint64_t>(trial) * 1000003ULL;
}

namespace internal {

class FieldReader {
 public:
  FieldReader(const Json& object, std::string path, std::vector<std::string>& errors)
      : object_(object), path_(std::move(path)), errors_(errors) {
    if (!object_.is_object()) Fail("", "must be an object");
  }

  const Json* Find(const std::string& key) const {
    if (!object_.is_object()) return nullptr;
    const auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  void Fail(const std::string& key, const std::string& message) const {
    errors_.push_back((key.empty() ? path_ : Join(key)) + ": " + message);
  }

  std::string Join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void Count(const std::string& key, std::size_t& out, std::size_t min_value = 0) const {
    const Json* v = Find(key);
    if (v == nullptr) return;
    if (!v->is_number_integer() || v->get<long long>() < 0) {
      Fail(key, "must be a non-negative integer");
      return;
    }
    const auto n = v->get<std::size_t>();
    if (n < min_value) {
      Fail(key, "must be at least " + std::to_string(min_value));
      return;
    }
    out = n;
  }

  void Seed(const std::string& key, std::uint64_t& out) const {
    const Json* v = Find(key);
    if (v == nullptr) return;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
      Fail(key, "must be a non-negative integer");
      return;
    }
    out = v->get<std::uint64_t>();
  }

  void Real(const std::string& key, double& out, bool positive = false) const {
    const Json* v = Find(key);
    if (v == nullptr) return;
    if (!v->is_number() || !std::isfinite(v->get<double>())) {
      Fail(key, "must be a finite number");
      return;
    }
    const double x = v->get<double>();
    if (positive && !(x > 0.0)) {
      Fail(key, "must be positive");
      return;
    }
    out = x;
  }

  void OptionalReal(const std::string& key, std::optional<double>& out) const {
    if (Find(key) == nullptr || Find(key)->is_null()) return;
    double x = 0.0;
    const std::size_t before = errors_.size();
    Real(key, x, true);
    if (errors_.size() == before) out = x;
  }

  void Text(const std::string& key, std::string& out) const {
    const Json* v = Find(key);
    if (v == nullptr) return;
    if (!v->is_string()) {
      Fail(key, "must be a string");
      return;
    }
    out = v->get<std::string>();
  }

  void Flag(const std::string& key, bool& out) const {
    const Json* v = Find(key);
    if (v == nullptr) return;
    if (!v->is_boolean()) {
      Fail(key, "must be true or false");
      return;
    }
    out = v->get<bool>();
  }

  // Integer or the string "auto".
  void CountOrAuto(const std::string& key, std::optional<std::size_t>& out, std::size_t min_value) const {
    const Json* v = Find(key);
    if (v == nullptr) return;
    if (v->is_string() && v->get<std::string>() == "auto") {
      out.reset();
      return;
    }
    std::size_t n = 0;
    const std::size_t before = errors_.size();
    if (!v->is_number_integer()) {
      Fail(key, "must be an integer or \"auto\"");
      return;
    }
    Count(key, n, min_value);
    if (errors_.size() == before) out = n;
  }

  // A number applied to every client, or one number per client.
  void PerClient(const std::string& key, std::size_t n, std::vector<double>& out) const {
    const Json* v = Find(key);
    if (v == nullptr) return;
    if (v->is_number()) {
      out.assign(n, v->get<double>());
      return;
    }
    if (v->is_array()) {
      if (v->size() != n) {
        Fail(key, "needs " + std::to_string(n) + " entries, one per client, got " +
                      std::to_string(v->size()));
        return;
      }
      std::vector<double> values;
      for (const Json& x : *v) {
        if (!x.is_number()) {
          Fail(key, "entries must be numbers");
          return;
        }
        values.push_back(x.get<double>());
      }
      out = std::move(values);
      return;
    }
    Fail(key, "must be a number or an array of numbers");
  }

 private:
  const Json& object_;
  std::string path_;
  std::vector<std::string>& errors_;
};

inline void CheckKeys(const Json& object, const std::string& path,
                      std::initializer_list<const char*> allowed, std::vector<std::string>& errors) {
  if (!object.is_object()) return;
  for (const auto& [key, value] : object.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) errors.push_back((path.empty() ? key : path + "." + key) + ": unknown key");
  }
}

inline std::string JoinErrors(const std::vector<std::string>& errors) {
  std::string out = "invalid configuration:";
  for (const auto& e : errors) out += "\n  " + e;
  return out;
}

}  // namespace internal

/// Parses and validates a configuration tree. Every problem found is
/// reported together in one kConfig error.
inline ExperimentConfig ParseConfig(const Json& root) {
  std::vector<std::string> errors;
  ExperimentConfig cfg;
  if (!root.is_object()) throw Error(ErrorCode::kConfig, "configuration must be a JSON object");
  internal::CheckKeys(root, "",
                      {"dataset", "partition", "model", "mechanism", "schedule", "constants",
                       "repeat", "seed", "threads", "output"},
                      errors);
  const internal::FieldReader top(root, "", errors);

  if (const Json* ds = top.Find("dataset")) {
    internal::CheckKeys(*ds, "dataset",
                        {"source", "samples", "test_samples", "features", "classes", "separation",
                         "scale", "seed", "train_images", "train_labels", "test_images", "test_labels",
                         "limit"},
                        errors);
    const internal::FieldReader r(*ds, "dataset", errors);
    DatasetConfig& d = cfg.dataset;
    r.Text("source", d.source);
    r.Count("samples", d.samples, 1);
    r.Count("test_samples", d.test_samples);
    r.Count("features", d.features, 1);
    r.Count("classes", d.classes, 2);
    r.Real("separation", d.separation);
    r.Real("scale", d.scale);
    r.Seed("seed", d.seed);
    r.Text("train_images", d.train_images);
    r.Text("train_labels", d.train_labels);
    r.Text("test_images", d.test_images);
    r.Text("test_labels", d.test_labels);
    r.Count("limit", d.limit);
    if (d.source == "idx") {
      if (d.train_images.empty() || d.train_labels.empty()) {
        r.Fail("train_images", "idx source needs train_images and train_labels");
      }
      if (d.test_images.empty() != d.test_labels.empty()) {
        r.Fail("test_images", "test_images and test_labels must be given together");
      }
    } else if (d.source != "synthetic") {
      r.Fail("source", "must be \"synthetic\" or \"idx\"");
    }
    if (d.separation < 0.0) r.Fail("separation", "must be non-negative");
    if (!(d.scale > 0.0) || !std::isfinite(d.scale)) r.Fail("scale", "must be positive and finite");
  }

  if (const Json* part = top.Find("partition")) {
    internal::CheckKeys(*part, "partition",
                        {"clients", "classes_per_client", "equal_sizes", "data_fraction"}, errors);
    const internal::FieldReader r(*part, "partition", errors);
    r.Count("clients", cfg.partition.clients, 1);
    r.Count("classes_per_client", cfg.partition.classes_per_client, 1);
    r.Flag("equal_sizes", cfg.partition.equal_sizes);
    r.Real("data_fraction", cfg.partition.data_fraction, true);
    if (cfg.partition.data_fraction > 1.0) r.Fail("data_fraction", "must lie in (0, 1]");
  }
  const std::size_t N = cfg.partition.clients;

  if (const Json* model = top.Find("model")) {
    internal::CheckKeys(*model, "model", {"l2"}, errors);
    const internal::FieldReader r(*model, "model", errors);
    r.Real("l2", cfg.l2);
    if (cfg.l2 < 0.0) r.Fail("l2", "must be non-negative");
  }

  std::vector<double> eps(N, 1.0);
  std::vector<double> delta(N, 0.0);
  if (const Json* mech = top.Find("mechanism")) {
    internal::CheckKeys(*mech, "mechanism",
                        {"kind", "xi1", "xi2", "q", "c1", "c2", "epsilon", "delta"}, errors);
    const internal::FieldReader r(*mech, "mechanism", errors);
    std::string kind = MechanismName(cfg.mechanism.kind);
    r.Text("kind", kind);
    try {
      cfg.mechanism.kind = ParseMechanism(kind);
    } catch (const Error& e) {
      r.Fail("kind", e.what());
    }
    r.Real("xi1", cfg.mechanism.xi1, true);
    r.Real("xi2", cfg.mechanism.xi2, true);
    r.Real("q", cfg.mechanism.q, true);
    r.Real("c1", cfg.mechanism.c1, true);
    r.Real("c2", cfg.mechanism.c2, true);
    if (cfg.mechanism.kind == MechanismKind::kGaussian) delta.assign(N, 1e-5);
    r.PerClient("epsilon", N, eps);
    r.PerClient("delta", N, delta);
    if (cfg.mechanism.q > 1.0) r.Fail("q", "must lie in (0, 1]");
    if (cfg.mechanism.kind == MechanismKind::kLaplace && cfg.mechanism.q != 1.0) {
      r.Fail("q", "the Laplace mechanism uses full local batches (q = 1)");
    }
    if (cfg.mechanism.kind == MechanismKind::kGaussian && !(cfg.mechanism.q < 1.0)) {
      r.Fail("q", "the Gaussian mechanism needs q < 1");
    }
  }
  for (std::size_t i = 0; i < eps.size() && i < delta.size(); ++i) {
    PrivacyBudget budget{eps[i], delta[i]};
    if (!(budget.epsilon > 0.0) || !std::isfinite(budget.epsilon)) {
      errors.push_back("mechanism.epsilon: client " + std::to_string(i) + " needs epsilon > 0");
    }
    if (cfg.mechanism.kind == MechanismKind::kGaussian && !(budget.delta > 0.0 && budget.delta < 1.0)) {
      errors.push_back("mechanism.delta: client " + std::to_string(i) + " needs delta in (0, 1)");
    }
    if (cfg.mechanism.kind == MechanismKind::kLaplace && budget.delta != 0.0) {
      errors.push_back("mechanism.delta: the Laplace mechanism is pure (delta = 0)");
    }
    cfg.budgets.push_back(budget);
  }

  cfg.schedule.participants = N;
  cfg.schedule.rounds = 100;
  if (const Json* sched = top.Find("schedule")) {
    internal::CheckKeys(*sched, "schedule",
                        {"participants", "rounds", "mu", "lambda", "selection", "T_cap"}, errors);
    const internal::FieldReader r(*sched, "schedule", errors);
    r.CountOrAuto("participants", cfg.schedule.participants, 1);
    r.CountOrAuto("rounds", cfg.schedule.rounds, 0);
    r.OptionalReal("mu", cfg.schedule.mu);
    r.OptionalReal("lambda", cfg.schedule.lambda);
    std::string selection = "round_robin";
    r.Text("selection", selection);
    if (selection == "uniform") {
      cfg.schedule.selection = SelectionMode::kUniform;
    } else if (selection != "round_robin") {
      r.Fail("selection", "must be \"round_robin\" or \"uniform\"");
    }
    r.Real("T_cap", cfg.schedule.T_cap, true);
    if (cfg.schedule.T_cap < 1.0) r.Fail("T_cap", "must be at least 1");
    if (cfg.schedule.participants && *cfg.schedule.participants > N) {
      r.Fail("participants", "must not exceed partition.clients (" + std::to_string(N) + ")");
    }
  }

  top.Text("constants", cfg.constants_path);
  top.Count("repeat", cfg.repeat, 1);
  top.Seed("seed", cfg.seed);
  top.Count("threads", cfg.threads);
  if (const Json* out = top.Find("output")) {
    if (out->is_string()) {
      cfg.output_dir = out->get<std::string>();
    } else {
      internal::CheckKeys(*out, "output", {"dir"}, errors);
      internal::FieldReader(*out, "output", errors).Text("dir", cfg.output_dir);
    }
  }
  if (cfg.output_dir.empty()) errors.push_back("output.dir: must not be empty");

  if (cfg.partition.classes_per_client > cfg.dataset.classes && cfg.dataset.source == "synthetic") {
    errors.push_back("partition.classes_per_client: exceeds dataset.classes");
  }
  if (!errors.empty()) throw Error(ErrorCode::kConfig, internal::JoinErrors(errors));
  return cfg;
}

inline Json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kConfig, path + ": " + e.what());
  }
}

/// Applies "a.b.c=value" to the tree. The value is read as JSON when it
/// parses, otherwise kept as a string.
inline void ApplyOverride(Json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::kConfig, "override must look like key.path=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  Json* node = &root;
  std::stringstream keys(path);
  std::string key;
  std::vector<std::string> parts;
  while (std::getline(keys, key, '.')) parts.push_back(key);
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
    if (!node->is_object()) throw Error(ErrorCode::kConfig, "cannot override inside " + path);
    node = &(*node)[parts[k]];
    if (node->is_null()) *node = Json::object();
  }
  if (!node->is_object()) throw Error(ErrorCode::kConfig, "cannot override inside " + path);
  (*node)[parts.back()] = value;
}

/// Canonical form of a parsed configuration; parsing it again gives the same
/// configuration.
inline Json ToJson(const ExperimentConfig& cfg) {
  Json j;
  const DatasetConfig& d = cfg.dataset;
  j["dataset"] = {{"source", d.source}};
  if (d.source == "synthetic") {
    j["dataset"]["samples"] = d.samples;
    j["dataset"]["test_samples"] = d.test_samples;
    j["dataset"]["features"] = d.features;
    j["dataset"]["classes"] = d.classes;
    j["dataset"]["separation"] = d.separation;
    j["dataset"]["scale"] = d.scale;
    j["dataset"]["seed"] = d.seed;
  } else {
    j["dataset"]["train_images"] = d.train_images;
    j["dataset"]["train_labels"] = d.train_labels;
    j["dataset"]["test_images"] = d.test_images;
    j["dataset"]["test_labels"] = d.test_labels;
  }
  j["dataset"]["limit"] = d.limit;
  j["partition"] = {{"clients", cfg.partition.clients},
                    {"classes_per_client", cfg.partition.classes_per_client},
                    {"equal_sizes", cfg.partition.equal_sizes},
                    {"data_fraction", cfg.partition.data_fraction}};
  j["model"] = {{"l2", cfg.l2}};
  Json eps = Json::array();
  Json delta = Json::array();
  for (const auto& b : cfg.budgets) {
    eps.push_back(b.epsilon);
    delta.push_back(b.delta);
  }
  j["mechanism"] = {{"kind", MechanismName(cfg.mechanism.kind)},
                    {"xi1", cfg.mechanism.xi1},
                    {"xi2", cfg.mechanism.xi2},
                    {"q", cfg.mechanism.q},
                    {"c1", cfg.mechanism.c1},
                    {"c2", cfg.mechanism.c2},
                    {"epsilon", eps},
                    {"delta", delta}};
  Json sched;
  sched["participants"] = cfg.schedule.participants ? Json(*cfg.schedule.participants) : Json("auto");
  sched["rounds"] = cfg.schedule.rounds ? Json(*cfg.schedule.rounds) : Json("auto");
  if (cfg.schedule.mu) sched["mu"] = *cfg.schedule.mu;
  if (cfg.schedule.lambda) sched["lambda"] = *cfg.schedule.lambda;
  sched["selection"] = cfg.schedule.selection == SelectionMode::kUniform ? "uniform" : "round_robin";
  sched["T_cap"] = cfg.schedule.T_cap;
  j["schedule"] = sched;
  if (!cfg.constants_path.empty()) j["constants"] = cfg.constants_path;
  j["repeat"] = cfg.repeat;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["output"] = {{"dir", cfg.output_dir}};
  return j;
}

}  // namespace dpfed::harness

#endif  // DPFED_HARNESS_CONFIG_HPP_
