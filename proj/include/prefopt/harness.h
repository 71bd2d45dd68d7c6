// Copyright 2026 The Prefopt Authors.
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

// Experiment subcommands behind the `prefopt` CLI: strict JSON configs,
// derived seeds, a bounded worker pool, and CSV / summary JSON emission.

#ifndef PREFOPT_HARNESS_H_
#define PREFOPT_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "prefopt/errors.h"

namespace prefopt::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

// Malformed or unknown configuration; maps to kExitUsage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// splitmix64 chain over `path`, so sub-seeds do not depend on run order.
uint64_t DeriveSeed(uint64_t base, std::initializer_list<uint64_t> path);

// Runs fn(0..n-1) on up to `workers` threads. Rethrows the exception of the
// lowest failing index after all tasks finish.
void ParallelFor(int n, int workers, const std::function<void(int)>& fn);

// %.17g, with "nan", "inf" and "-inf" for non-finite values.
std::string FormatDouble(double v);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  const std::vector<std::string>& header() const { return header_; }
  size_t num_rows() const { return rows_.size(); }
  const std::vector<std::string>& row(size_t i) const { return rows_[i]; }

  // Throws std::logic_error when the width does not match the header.
  void AddRow(std::vector<std::string> row);
  // Header plus rows, comma separated, LF line endings.
  std::string ToString() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct CommandOutput {
  std::string command;
  nlohmann::ordered_json config;   // effective config, defaults filled in
  nlohmann::ordered_json metrics;  // command-specific scalars
  std::vector<Check> checks;
  std::vector<std::pair<std::string, CsvTable>> files;  // name -> table

  bool passed() const;
  const Check* FindCheck(const std::string& name) const;
};

// Summary document: command, seed, config echo, versions, checks. No
// timestamps, so repeats are byte-identical.
nlohmann::ordered_json MakeSummary(const CommandOutput& out, uint64_t seed);

// Writes every CSV plus <command>_summary.json into `dir`, creating it.
void WriteOutputs(const CommandOutput& out, uint64_t seed,
                  const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Configs. FromJson rejects unknown keys, wrong types and empty lists with
// ConfigError; ToJson echoes every field.

struct GradcheckConfig {
  std::vector<std::string> losses{"dpo", "ipo", "distill", "pdistill", "pdpo"};
  int instances = 100;
  std::vector<double> epsilons{1e-6};
  double tolerance = 1e-5;
  int max_contexts = 3;
  int max_outcomes = 4;
  // Negative control: the named loss has its analytic gradient negated.
  std::string inject_sign_flip;

  static GradcheckConfig FromJson(const nlohmann::json& j);
  nlohmann::ordered_json ToJson() const;
};

struct DegeneracyConfig {
  std::vector<std::string> methods{"dpo", "p-dpo", "d-dpo"};
  int pairs = 3;
  int unseen = 1;
  double beta = 1.0;
  double lr = 1.0;
  long steps = 100000;
  long record_every = 100;
  double gamma = 1e-2;
  std::string kl_mode = "empirical";
  double rm_l2 = 1e-3;
  double rm_lr = 1.0;
  long rm_steps = 20000;
  // Hand-specified instance; when set, disjointness is checked.
  std::vector<std::pair<int, int>> pair_list;

  static DegeneracyConfig FromJson(const nlohmann::json& j);
  nlohmann::ordered_json ToJson() const;
};

struct TransitivityConfig {
  std::vector<int> ns{3};
  std::vector<double> betas{1, 3, 10, 30};
  std::vector<double> alphas{5, 10, 20, 50, 100, 1000};
  std::vector<std::string> methods{"ipo", "p-dpo"};
  double gap_tolerance = 1e-2;

  static TransitivityConfig FromJson(const nlohmann::json& j);
  nlohmann::ordered_json ToJson() const;
};

// Synthetic world shared by bias-sweep and edpo-rm-dist.
struct WorldConfig {
  int contexts = 10;
  int outcomes = 5;
  int length_min = 10;
  int length_max = 60;
  double base_reward_std = 3.0;
  double ref_logit_std = 0.5;
  int raw_pairs = 20000;
  double longer_margin = 0.10;
  double longer_target = 0.61;
  int dataset_size = 2500;
  double train_fraction = 0.8;
  std::vector<double> b_grid{0.2, 0.4, 0.5, 0.6, 0.8};
  int member_size = 300;
  double rm_l2 = 1e-3;
  double rm_lr = 2.0;
  long rm_steps = 3000;
  bool rm_length_feature = true;
  // Zero oracle reward everywhere; every advantage is then zero.
  bool identical_rewards = false;

  // Reads the world keys of `j` and marks them consumed in `seen`.
  void Read(const nlohmann::json& j, std::vector<std::string>& seen);
  void Write(nlohmann::ordered_json& j) const;
};

struct PolicyRunConfig {
  long steps = 1000;
  double lr = 2.0;       // scaled by min(1, 1 / beta^2)
  double ipo_lr = 0.5;
  double gamma_start = 1e-4;
  double gamma_end = 1e-2;
  int batch_size = 100;  // e-dpo mini-batches

  void Read(const nlohmann::json& j, std::vector<std::string>& seen);
  void Write(nlohmann::ordered_json& j) const;
};

struct BiasSweepConfig {
  WorldConfig world;
  PolicyRunConfig run;
  std::vector<double> rhos{0.2, 0.3, 0.5, 0.8};
  int seeds = 3;
  std::vector<std::string> methods{"dpo",    "ipo",    "d-dpo",
                                   "p-dpo",  "dp-dpo", "e-dpo"};
  std::vector<double> betas{0.1, 0.3, 1, 3};
  std::vector<double> tau_invs{0.1, 0.3, 1, 3};
  // rho values where distillation must match or beat dpo and ipo.
  std::vector<double> distill_rhos{0.2, 0.3};

  static BiasSweepConfig FromJson(const nlohmann::json& j);
  nlohmann::ordered_json ToJson() const;
};

struct EdpoRmDistConfig {
  WorldConfig world;
  PolicyRunConfig run;
  std::vector<double> rhos{0.2, 0.8};
  int seeds = 3;
  double beta = 1.0;

  static EdpoRmDistConfig FromJson(const nlohmann::json& j);
  nlohmann::ordered_json ToJson() const;
};

// ---------------------------------------------------------------------------
// Subcommands. Each is deterministic in (config, seed) and independent of
// `workers`.

CommandOutput RunGradcheck(const GradcheckConfig& config, uint64_t seed,
                           int workers);
CommandOutput RunDegeneracy(const DegeneracyConfig& config, uint64_t seed,
                            int workers);
CommandOutput RunTransitivity(const TransitivityConfig& config, uint64_t seed,
                              int workers);
CommandOutput RunBiasSweep(const BiasSweepConfig& config, uint64_t seed,
                           int workers);
CommandOutput RunEdpoRmDist(const EdpoRmDistConfig& config, uint64_t seed,
                            int workers);

const std::vector<std::string>& CommandNames();

// Parses `config_json` for `command` and runs it.
CommandOutput Dispatch(const std::string& command,
                       const nlohmann::json& config_json, uint64_t seed,
                       int workers);

// Reads a JSON file; ConfigError on I/O or parse failure.
nlohmann::json LoadConfigFile(const std::filesystem::path& path);

// Full CLI flow minus argument parsing: load, run, write, report on `log`.
// Returns the exit code.
int RunCommand(const std::string& command,
               const std::filesystem::path& config_path, uint64_t seed,
               const std::filesystem::path& out_dir, int workers,
               std::ostream& log);

}  // namespace prefopt::harness

#endif  // PREFOPT_HARNESS_H_
