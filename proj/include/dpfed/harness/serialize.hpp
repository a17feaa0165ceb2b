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
#ifndef DPFED_HARNESS_SERIALIZE_HPP_
#define DPFED_HARNESS_SERIALIZE_HPP_

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dpfed/bounds.hpp"
#include "dpfed/harness/config.hpp"

namespace dpfed::harness {

/// Writes `content` to a sibling temp file and renames it over `path`.
inline void AtomicWrite(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::kIo, "cannot move " + tmp.string() + " to " + path.string());
  }
}

inline Json ConstantsToJson(const BoundConstants& c) {
  Json budgets = Json::array();
  for (const auto& b : c.budgets) budgets.push_back({{"epsilon", b.epsilon}, {"delta", b.delta}});
  return {{"mu", c.mu},           {"lambda", c.lambda},
          {"G", c.G},             {"Gamma", c.Gamma},
          {"Y0", c.Y0},           {"p", c.p},
          {"d", c.d},             {"N", c.N},
          {"budgets", budgets},   {"xi1", c.xi1},
          {"xi2", c.xi2},         {"Lambda", c.Lambda},
          {"client_sizes", c.client_sizes}, {"q", c.q},
          {"c2", c.c2}};
}

inline BoundConstants ConstantsFromJson(const Json& j) {
  std::vector<std::string> errors;
  internal::CheckKeys(j, "constants",
                      {"mu", "lambda", "G", "Gamma", "Y0", "p", "d", "N", "budgets", "xi1", "xi2",
                       "Lambda", "client_sizes", "q", "c2"},
                      errors);
  const internal::FieldReader r(j, "constants", errors);
  BoundConstants c;
  r.Real("mu", c.mu, true);
  r.Real("lambda", c.lambda, true);
  r.Real("G", c.G);
  r.Real("Gamma", c.Gamma);
  r.Real("Y0", c.Y0);
  r.Real("p", c.p, true);
  r.Real("d", c.d, true);
  r.Count("N", c.N, 1);
  r.Real("xi1", c.xi1, true);
  r.Real("xi2", c.xi2, true);
  r.Real("q", c.q, true);
  r.Real("c2", c.c2, true);
  const auto read_list = [&](const char* key, std::vector<double>& out) {
    const Json* v = r.Find(key);
    if (v == nullptr) return;
    if (!v->is_array()) {
      r.Fail(key, "must be an array");
      return;
    }
    for (const Json& x : *v) {
      if (!x.is_number()) {
        r.Fail(key, "entries must be numbers");
        return;
      }
      out.push_back(x.get<double>());
    }
  };
  read_list("Lambda", c.Lambda);
  read_list("client_sizes", c.client_sizes);
  if (const Json* b = r.Find("budgets")) {
    if (!b->is_array()) {
      r.Fail("budgets", "must be an array of {epsilon, delta}");
    } else {
      for (const Json& e : *b) {
        if (!e.is_object() || !e.contains("epsilon") || !e["epsilon"].is_number()) {
          r.Fail("budgets", "entries need a numeric epsilon");
          break;
        }
        const double delta = e.contains("delta") && e["delta"].is_number() ? e["delta"].get<double>() : 0.0;
        c.budgets.push_back({e["epsilon"].get<double>(), delta});
      }
    }
  } else {
    r.Fail("budgets", "missing");
  }
  if (!errors.empty()) throw Error(ErrorCode::kConfig, internal::JoinErrors(errors));
  return c;
}

inline Json CandidateToJson(const CandidateSolution& s) {
  Json j = {{"T", s.T},
            {"b", s.b},
            {"bound_value", s.bound_value},
            {"provenance", ProvenanceName(s.provenance)},
            {"T_continuous", s.T_continuous},
            {"b_continuous", s.b_continuous},
            {"T_capped", s.T_capped}};
  if (s.limit_value) j["limit_value"] = *s.limit_value;
  return j;
}

inline Json PlanToJson(const PlanResult& plan, MechanismKind kind, double T_cap,
                       const BoundConstants& c) {
  Json candidates = Json::array();
  for (const auto& s : plan.candidates) candidates.push_back(CandidateToJson(s));
  return {{"mechanism", MechanismName(kind)},
          {"T_cap", T_cap},
          {"candidates", candidates},
          {"selected", CandidateToJson(plan.selected())},
          {"warnings", plan.warnings},
          {"constants", ConstantsToJson(c)}};
}

inline std::string PlanTable(const PlanResult& plan) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "candidate" << std::right << std::setw(10) << "T"
     << std::setw(6) << "b" << std::setw(18) << "bound" << '\n';
  for (std::size_t k = 0; k < plan.candidates.size(); ++k) {
    const auto& s = plan.candidates[k];
    os << std::left << std::setw(16) << ProvenanceName(s.provenance) << std::right << std::setw(10)
       << s.T << std::setw(6) << s.b << std::setw(18) << std::setprecision(8) << s.bound_value
       << (k == plan.best ? "  <- selected" : "") << (s.T_capped ? "  (T capped)" : "") << '\n';
  }
  for (const auto& w : plan.warnings) os << "warning: " << w << '\n';
  return os.str();
}

}  // namespace dpfed::harness

#endif  // DPFED_HARNESS_SERIALIZE_HPP_
