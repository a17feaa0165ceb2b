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
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpfed/harness/checks.hpp"
#include "dpfed/harness/config.hpp"
#include "dpfed/harness/experiment.hpp"
#include "dpfed/harness/serialize.hpp"

namespace {

using dpfed::Error;
using dpfed::ErrorCode;
namespace h = dpfed::harness;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> repeat;
  std::optional<std::string> participants;
  std::optional<std::string> rounds;
  std::optional<std::string> mechanism;
  std::optional<double> epsilon;
  std::optional<std::size_t> threads;
};

void AddCommonFlags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-c,--config", f.config_path, "JSON configuration file");
  cmd->add_option("--set", f.overrides, "Override a config key, e.g. --set schedule.rounds=50");
  cmd->add_option("-o,--out", f.out, "Output directory (output.dir)");
  cmd->add_option("--seed", f.seed, "Base seed");
  cmd->add_option("--repeat", f.repeat, "Number of trials");
  cmd->add_option("-b,--participants", f.participants, "Clients per round, or auto");
  cmd->add_option("-T,--rounds", f.rounds, "Global rounds, or auto");
  cmd->add_option("--mechanism", f.mechanism, "none, laplace or gaussian");
  cmd->add_option("--epsilon", f.epsilon, "Privacy budget applied to every client");
  cmd->add_option("--threads", f.threads, "Worker threads for trials (0 = all cores)");
}

h::ExperimentConfig LoadConfig(const CommonFlags& f) {
  h::Json root = f.config_path.empty() ? h::Json::object() : h::ReadJsonFile(f.config_path);
  const auto set = [&](const std::string& key, const h::Json& value) {
    h::ApplyOverride(root, key + "=" + value.dump());
  };
  const auto count_or_auto = [](const std::string& text) {
    if (text == "auto") return h::Json("auto");
    h::Json v = h::Json::parse(text, nullptr, false);
    return v.is_discarded() ? h::Json(text) : v;
  };
  if (f.out) set("output.dir", *f.out);
  if (f.seed) set("seed", *f.seed);
  if (f.repeat) set("repeat", *f.repeat);
  if (f.participants) set("schedule.participants", count_or_auto(*f.participants));
  if (f.rounds) set("schedule.rounds", count_or_auto(*f.rounds));
  if (f.mechanism) set("mechanism.kind", *f.mechanism);
  if (f.epsilon) set("mechanism.epsilon", *f.epsilon);
  if (f.threads) set("threads", *f.threads);
  for (const auto& o : f.overrides) h::ApplyOverride(root, o);
  return h::ParseConfig(root);
}

std::string Fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

int Train(const CommonFlags& f) {
  const h::ExperimentConfig cfg = LoadConfig(f);
  const h::ExperimentResult result = h::RunExperiment(cfg);
  h::WriteExperiment(result, cfg.output_dir);
  for (const auto& w : result.schedule.warnings) std::cerr << "warning: " << w << '\n';
  if (result.schedule.plan) std::cout << h::PlanTable(*result.schedule.plan);
  std::cout << "b=" << result.schedule.b << " T=" << result.schedule.T << " trials=" << cfg.repeat
            << " final loss " << Fixed(result.final.loss_mean) << " +- " << Fixed(result.final.loss_std)
            << ", accuracy " << Fixed(result.final.acc_mean) << " +- " << Fixed(result.final.acc_std)
            << '\n'
            << "wrote " << cfg.output_dir << '\n';
  return kExitOk;
}

int Sweep(const CommonFlags& f, const std::string& axis_name, const std::vector<double>& values) {
  const h::ExperimentConfig cfg = LoadConfig(f);
  const h::SweepAxis axis = h::ParseSweepAxis(axis_name);
  for (double v : values) h::WithAxisValue(cfg, axis, v);
  const auto rows = h::RunSweep(cfg, axis, values);
  bool all_ok = true;
  std::cout << axis_name << "\tb\tT\tloss\t\tacc\n";
  for (const auto& r : rows) {
    if (!r.ok) {
      all_ok = false;
      std::cout << h::SweepValueLabel(r.value) << "\tfailed: " << r.message << '\n';
      continue;
    }
    std::cout << h::SweepValueLabel(r.value) << '\t' << r.b << '\t' << r.T << '\t'
              << Fixed(r.final.loss_mean) << "+-" << Fixed(r.final.loss_std) << '\t'
              << Fixed(r.final.acc_mean) << "+-" << Fixed(r.final.acc_std) << '\n';
  }
  std::cout << "wrote " << (std::filesystem::path(cfg.output_dir) / "sweep.csv").string() << '\n';
  return all_ok ? kExitOk : kExitRuntime;
}

int Plan(const CommonFlags& f, const std::string& constants_path, std::optional<double> T_cap_flag) {
  h::ExperimentConfig cfg = LoadConfig(f);
  if (!constants_path.empty()) cfg.constants_path = constants_path;
  const double T_cap = T_cap_flag.value_or(cfg.schedule.T_cap);
  dpfed::BoundConstants c;
  if (!cfg.constants_path.empty()) {
    c = h::ConstantsFromJson(h::ReadJsonFile(cfg.constants_path));
  } else {
    const h::PreparedData data = h::PrepareData(cfg);
    c = h::EstimateForConfig(cfg, data).constants;
  }
  const dpfed::PlanResult plan = h::PlanFor(cfg.mechanism.kind, c, T_cap);
  std::cout << h::PlanTable(plan);
  const auto path = std::filesystem::path(cfg.output_dir) / "plan.json";
  h::AtomicWrite(path, h::PlanToJson(plan, cfg.mechanism.kind, T_cap, c).dump(2) + "\n");
  std::cout << "wrote " << path.string() << '\n';
  return kExitOk;
}

int Estimate(const CommonFlags& f) {
  const h::ExperimentConfig cfg = LoadConfig(f);
  const h::PreparedData data = h::PrepareData(cfg);
  const dpfed::EstimateResult est = h::EstimateForConfig(cfg, data);
  for (const auto& w : est.warnings) std::cerr << "warning: " << w << '\n';
  const auto& c = est.constants;
  std::cout << "mu=" << c.mu << " lambda=" << c.lambda << " G=" << c.G << " Gamma=" << c.Gamma
            << " Y0=" << c.Y0 << " p=" << c.p << " d=" << c.d << " N=" << c.N << '\n';
  const auto path = std::filesystem::path(cfg.output_dir) / "constants.json";
  h::AtomicWrite(path, h::ConstantsToJson(c).dump(2) + "\n");
  std::cout << "wrote " << path.string() << '\n';
  return kExitOk;
}

int Validate(const h::CheckOptions& opt) {
  bool ok = true;
  for (const auto& r : h::RunValidationSuite(opt)) {
    ok = ok && r.passed;
    std::printf("%s  %-30s %7.2fs  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
                r.detail.c_str());
  }
  return ok ? kExitOk : kExitValidation;
}

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInfeasiblePartition:
    case ErrorCode::kIo:
    case ErrorCode::kIdxMagic:
    case ErrorCode::kIdxTruncated:
    case ErrorCode::kIdxCountMismatch:
    case ErrorCode::kCsvFormat:
    case ErrorCode::kUnboundedHorizon:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning with client-side differential privacy: simulator and planner"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "Run repeated federations and write traces");
  AddCommonFlags(train, train_flags);

  CommonFlags sweep_flags;
  std::string axis;
  std::vector<double> values;
  CLI::App* sweep = app.add_subcommand("sweep", "Run one experiment per value of an axis");
  AddCommonFlags(sweep, sweep_flags);
  sweep->add_option("--axis", axis, "b, T, epsilon or data_fraction")->required();
  sweep->add_option("--values", values, "Axis values")->required()->delimiter(',');

  CommonFlags plan_flags;
  std::string constants_path;
  std::optional<double> T_cap;
  CLI::App* plan = app.add_subcommand("plan", "Compute the optimal (T, b) from bound constants");
  AddCommonFlags(plan, plan_flags);
  plan->add_option("--constants", constants_path, "Bound constants JSON (estimated when absent)");
  plan->add_option("--T-cap", T_cap, "Largest T considered");

  CommonFlags estimate_flags;
  CLI::App* estimate = app.add_subcommand("estimate", "Estimate bound constants from the data");
  AddCommonFlags(estimate, estimate_flags);

  h::CheckOptions check_options;
  CLI::App* validate = app.add_subcommand("validate", "Check the analytic results against oracles");
  validate->add_option("--seed", check_options.seed, "Oracle seed");
  validate->add_option("--effort", check_options.effort, "Trial-count multiplier")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return Train(train_flags);
    if (*sweep) return Sweep(sweep_flags, axis, values);
    if (*plan) return Plan(plan_flags, constants_path, T_cap);
    if (*estimate) return Estimate(estimate_flags);
    if (*validate) return Validate(check_options);
  } catch (const Error& e) {
    std::cerr << "error [" << dpfed::ErrorCodeName(e.code()) << "]: " << e.what() << '\n';
    return ExitCodeFor(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
