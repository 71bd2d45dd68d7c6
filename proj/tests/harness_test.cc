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

#include "prefopt/harness.h"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefopt/errors.h"

namespace prefopt::harness {
namespace {

using nlohmann::json;

std::filesystem::path TempDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("prefopt_harness_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string Slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path WriteConfig(const std::filesystem::path& dir,
                                  const std::string& text) {
  const auto p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

// Splits CSV text into rows of fields; the harness never quotes.
std::vector<std::vector<std::string>> ParseCsv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.push_back("");
    rows.push_back(f);
  }
  return rows;
}

const CsvTable& File(const CommandOutput& out, const std::string& name) {
  for (const auto& [n, t] : out.files) {
    if (n == name) return t;
  }
  throw std::runtime_error("missing output " + name);
}

// Small bias world so tests stay fast.
json SmallWorld() {
  return {{"contexts", 4},       {"outcomes", 4},     {"raw_pairs", 3000},
          {"dataset_size", 600}, {"member_size", 100}, {"rm_steps", 300},
          {"steps", 100},        {"seeds", 2}};
}

TEST(DeriveSeedTest, DeterministicAndPathSensitive) {
  EXPECT_EQ(DeriveSeed(7, {1, 2}), DeriveSeed(7, {1, 2}));
  EXPECT_NE(DeriveSeed(7, {1, 2}), DeriveSeed(7, {2, 1}));
  EXPECT_NE(DeriveSeed(7, {1}), DeriveSeed(8, {1}));
  EXPECT_NE(DeriveSeed(7, {}), DeriveSeed(7, {0}));
}

TEST(ParallelForTest, VisitsEveryIndexOnce) {
  for (int workers : {1, 3, 16}) {
    std::vector<std::atomic<int>> hits(50);
    ParallelFor(50, workers, [&](int i) { ++hits[i]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
  ParallelFor(0, 4, [](int) { FAIL(); });
}

TEST(ParallelForTest, RethrowsLowestFailingIndex) {
  try {
    ParallelFor(20, 4, [](int i) {
      if (i == 5 || i == 11) throw std::runtime_error(std::to_string(i));
    });
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "5");
  }
}

TEST(FormatDoubleTest, SeventeenDigitsAndSpecials) {
  EXPECT_EQ(FormatDouble(0.1), "0.10000000000000001");
  EXPECT_EQ(FormatDouble(2.0), "2");
  EXPECT_EQ(FormatDouble(std::nan("")), "nan");
  EXPECT_EQ(FormatDouble(-INFINITY), "-inf");
  for (double v : {1.0 / 3.0, -2.5e-300, 6.02214076e23}) {
    EXPECT_EQ(std::strtod(FormatDouble(v).c_str(), nullptr), v);
  }
}

TEST(CsvTableTest, LfLinesAndWidthCheck) {
  CsvTable t({"a", "b"});
  t.AddRow({"1", "2"});
  EXPECT_EQ(t.ToString(), "a,b\n1,2\n");
  EXPECT_THROW(t.AddRow({"1"}), std::logic_error);
}

TEST(ConfigTest, StrictParsing) {
  EXPECT_THROW(GradcheckConfig::FromJson(json{{"bogus", 1}}), ConfigError);
  EXPECT_THROW(GradcheckConfig::FromJson(json{{"instances", "many"}}), ConfigError);
  EXPECT_THROW(GradcheckConfig::FromJson(json{{"instances", 1.5}}), ConfigError);
  EXPECT_THROW(GradcheckConfig::FromJson(json{{"epsilons", json::array()}}),
               ConfigError);
  EXPECT_THROW(GradcheckConfig::FromJson(json::array()), ConfigError);
  EXPECT_THROW(TransitivityConfig::FromJson(json{{"methods", {"dpo"}}}), ConfigError);
  EXPECT_THROW(BiasSweepConfig::FromJson(json{{"rhos", {1.5}}}), ConfigError);
  EXPECT_THROW(DegeneracyConfig::FromJson(json{{"kl_mode", "both"}}), ConfigError);
  EXPECT_THROW(EdpoRmDistConfig::FromJson(json{{"seeds", 0}}), ConfigError);
}

TEST(ConfigTest, EchoRoundTrips) {
  EXPECT_EQ(json(GradcheckConfig::FromJson(json::object()).ToJson()),
            json(GradcheckConfig::FromJson(GradcheckConfig().ToJson()).ToJson()));
  const json b = BiasSweepConfig().ToJson();
  EXPECT_EQ(json(BiasSweepConfig::FromJson(b).ToJson()), b);
  const json e = EdpoRmDistConfig().ToJson();
  EXPECT_EQ(json(EdpoRmDistConfig::FromJson(e).ToJson()), e);
  const json t = TransitivityConfig().ToJson();
  EXPECT_EQ(json(TransitivityConfig::FromJson(t).ToJson()), t);
  DegeneracyConfig d;
  d.pair_list = {{0, 1}, {3, 2}};
  EXPECT_EQ(json(DegeneracyConfig::FromJson(d.ToJson()).ToJson()), json(d.ToJson()));
}

TEST(GradcheckCommandTest, DefaultPassesAndReportsEveryLoss) {
  GradcheckConfig c;
  c.instances = 30;
  const CommandOutput out = RunGradcheck(c, 3, 2);
  EXPECT_TRUE(out.passed());
  EXPECT_EQ(File(out, "gradcheck.csv").num_rows(), 5u);
  for (const auto& l : c.losses) {
    EXPECT_LT(out.metrics["max_rel_error"][l].get<double>(), 1e-5) << l;
  }
}

TEST(GradcheckCommandTest, EpsilonSweepPasses) {
  GradcheckConfig c;
  c.instances = 30;
  c.epsilons = {1e-4, 1e-6};
  EXPECT_TRUE(RunGradcheck(c, 4, 1).passed());
}

TEST(GradcheckCommandTest, SignFlipIsCaught) {
  GradcheckConfig c;
  c.instances = 10;
  c.inject_sign_flip = "ipo";
  const CommandOutput out = RunGradcheck(c, 5, 1);
  EXPECT_FALSE(out.passed());
  EXPECT_FALSE(out.FindCheck("gradcheck_ipo")->passed);
  EXPECT_TRUE(out.FindCheck("gradcheck_dpo")->passed);
}

TEST(DegeneracyCommandTest, DefaultChecksPass) {
  const CommandOutput out = RunDegeneracy(DegeneracyConfig(), 1, 2);
  for (const auto& ch : out.checks) EXPECT_TRUE(ch.passed) << ch.name << ": " << ch.detail;
  const auto& t = File(out, "degeneracy_dpo.csv");
  EXPECT_EQ(t.header(), (std::vector<std::string>{
                            "step", "loss", "margin_min", "margin_max",
                            "mean_log_pi_w", "mean_log_pi_l", "kl_fwd", "kl_rev",
                            "mass_on_unseen"}));
  EXPECT_EQ(t.num_rows(), 1001u);
  // Margins keep growing but stay far from the degenerate limit at 1e5 steps.
  const double m = out.metrics["dpo"]["final_margin_min"].get<double>();
  EXPECT_GT(m, 10.0);
  EXPECT_LT(m, 20.0);
  // p-dpo settles at a finite margin, d-dpo keeps both outcomes alive.
  EXPECT_NEAR(out.metrics["p-dpo"]["fixed_point_log_ratio"].get<double>(),
              std::log(1.0 + 1.0 / 1e-2), 1e-9);
  EXPECT_GT(out.metrics["d-dpo"]["min_pair_prob"].get<double>(), 1e-3);
}

TEST(DegeneracyCommandTest, ExactKlModeFixedPoint) {
  DegeneracyConfig c;
  c.methods = {"p-dpo"};
  c.kl_mode = "exact";
  c.steps = 50000;
  const CommandOutput out = RunDegeneracy(c, 1, 1);
  EXPECT_TRUE(out.passed()) << out.checks[0].detail;
}

TEST(DegeneracyCommandTest, NonDisjointInstanceIsRejected) {
  DegeneracyConfig c;
  c.pair_list = {{0, 1}, {1, 2}};
  EXPECT_THROW(RunDegeneracy(c, 1, 1), PreconditionError);
}

TEST(TransitivityCommandTest, AnalyticColumnsAndChecks) {
  TransitivityConfig c;
  c.betas = {1.0};
  c.alphas = {1.0 + std::exp(1.0)};  // tau^-1 = 1
  const CommandOutput out = RunTransitivity(c, 0, 1);
  // Off the default grid the p-dpo gap is 0.011, so only the IPO checks apply.
  EXPECT_TRUE(out.FindCheck("ipo_matches_analytic")->passed);
  EXPECT_TRUE(out.FindCheck("ipo_closure_compressed")->passed);
  const auto& t = File(out, "transitivity.csv");
  const auto col = [&](const char* name) {
    return std::find(t.header().begin(), t.header().end(), name) - t.header().begin();
  };
  bool saw_chain = false, saw_closure = false;
  for (size_t i = 0; i < t.num_rows(); ++i) {
    const auto& r = t.row(i);
    if (r[col("method")] != "ipo") {
      EXPECT_EQ(r[col("spread_analytic")], "");
      continue;
    }
    const double want = r[col("kind")] == "chain" ? 2.0 : 4.0 / 3.0;
    EXPECT_NEAR(std::stod(r[col("spread_analytic")]), want, 1e-12);
    EXPECT_NEAR(std::stod(r[col("spread")]), want, 1e-9);
    (r[col("kind")] == "chain" ? saw_chain : saw_closure) = true;
  }
  EXPECT_TRUE(saw_chain && saw_closure);
}

TEST(TransitivityCommandTest, FullGridPasses) {
  const CommandOutput out = RunTransitivity(TransitivityConfig(), 0, 2);
  for (const auto& ch : out.checks) EXPECT_TRUE(ch.passed) << ch.name << ": " << ch.detail;
  EXPECT_LT(out.metrics["pdpo_max_chain_closure_gap"].get<double>(), 1e-2);
}

TEST(BiasSweepCommandTest, IdenticalRewardsGiveZeroAdvantage) {
  json j = SmallWorld();
  j["identical_rewards"] = true;
  j["betas"] = {1.0};
  j["tau_invs"] = {1.0};
  j["rhos"] = {0.3};
  const CommandOutput out = RunBiasSweep(BiasSweepConfig::FromJson(j), 2, 2);
  ASSERT_EQ(out.checks.size(), 1u);
  EXPECT_TRUE(out.checks[0].passed) << out.checks[0].detail;
}

TEST(BiasSweepCommandTest, UnachievableRhoIsAnError) {
  json j = SmallWorld();
  j["rhos"] = {1.0};
  j["dataset_size"] = 2900;
  EXPECT_THROW(RunBiasSweep(BiasSweepConfig::FromJson(j), 2, 1), PreconditionError);
}

TEST(BiasSweepCommandTest, SchemaAndSelection) {
  json j = SmallWorld();
  j["betas"] = {0.3, 1.0};
  j["tau_invs"] = {0.3, 1.0};
  j["rhos"] = {0.2, 0.8};
  const BiasSweepConfig c = BiasSweepConfig::FromJson(j);
  const CommandOutput out = RunBiasSweep(c, 2, 2);
  const auto& runs = File(out, "bias_sweep.csv");
  EXPECT_EQ(runs.header(),
            (std::vector<std::string>{"seed_index", "seed", "rho", "method", "hyper_name",
                                      "hyper", "metric", "value", "diverged"}));
  // seeds x rhos x methods x 2 hypers x 2 metrics
  EXPECT_EQ(runs.num_rows(), 2u * 2 * 6 * 2 * 2);
  const auto& sel = File(out, "bias_sweep_selected.csv");
  EXPECT_EQ(sel.num_rows(), 2u * 2 * 6);
  for (size_t i = 0; i < runs.num_rows(); ++i) {
    EXPECT_TRUE(std::isfinite(std::stod(runs.row(i)[7])));
  }
  ASSERT_NE(out.FindCheck("all_methods_positive"), nullptr);
  ASSERT_NE(out.FindCheck("distillation_beats_dpo_ipo_rho_0.2"), nullptr);
  EXPECT_EQ(out.FindCheck("distillation_beats_dpo_ipo_rho_0.3"), nullptr);
}

TEST(EdpoRmDistCommandTest, SingletonEnsembleIsDegenerate) {
  json j = SmallWorld();
  j["b_grid"] = {0.5};
  const CommandOutput out = RunEdpoRmDist(EdpoRmDistConfig::FromJson(j), 3, 2);
  ASSERT_EQ(out.checks.size(), 1u);
  EXPECT_TRUE(out.checks[0].passed);
  const auto& t = File(out, "edpo_rm_dist.csv");
  for (size_t i = 0; i < t.num_rows(); ++i) EXPECT_EQ(t.row(i)[6], "1");
}

TEST(EdpoRmDistCommandTest, CountsCoverEveryStep) {
  json j = SmallWorld();
  const CommandOutput out = RunEdpoRmDist(EdpoRmDistConfig::FromJson(j), 3, 2);
  const auto& t = File(out, "edpo_rm_dist.csv");
  EXPECT_EQ(t.num_rows(), 2u * 2 * 5);
  std::map<std::string, long> totals;
  for (size_t i = 0; i < t.num_rows(); ++i) {
    totals[t.row(i)[0] + "/" + t.row(i)[2]] += std::stol(t.row(i)[5]);
  }
  for (const auto& [key, total] : totals) EXPECT_EQ(total, 100) << key;
}

TEST(ReproducibilityTest, RepeatsAndWorkerCountsAreByteIdentical) {
  json small = SmallWorld();
  small["betas"] = {1.0};
  small["tau_invs"] = {1.0};
  small["rhos"] = {0.2};
  const std::vector<std::pair<std::string, json>> cases{
      {"gradcheck", {{"instances", 10}}},
      {"degeneracy", {{"steps", 2000}}},
      {"transitivity", {{"betas", {1.0, 3.0}}, {"alphas", {5.0, 20.0}}}},
      {"bias-sweep", small},
      {"edpo-rm-dist", SmallWorld()}};
  for (const auto& [cmd, cfg] : cases) {
    const CommandOutput a = Dispatch(cmd, cfg, 11, 1);
    const CommandOutput b = Dispatch(cmd, cfg, 11, 3);
    ASSERT_EQ(a.files.size(), b.files.size()) << cmd;
    for (size_t i = 0; i < a.files.size(); ++i) {
      EXPECT_EQ(a.files[i].second.ToString(), b.files[i].second.ToString())
          << cmd << " " << a.files[i].first;
    }
    EXPECT_EQ(MakeSummary(a, 11).dump(), MakeSummary(b, 11).dump()) << cmd;
  }
}

TEST(RunCommandTest, ExitCodesAndFiles) {
  const auto dir = TempDir("exit_codes");
  std::ostringstream log;
  EXPECT_EQ(RunCommand("gradcheck", dir / "missing.json", 1, dir / "out", 1, log),
            kExitUsage);
  EXPECT_EQ(RunCommand("gradcheck", WriteConfig(dir, "{\"instances\": "), 1, dir / "out",
                       1, log),
            kExitUsage);
  EXPECT_EQ(RunCommand("gradcheck", WriteConfig(dir, "{\"nope\": 1}"), 1, dir / "out", 1,
                       log),
            kExitUsage);
  EXPECT_EQ(RunCommand("frobnicate", WriteConfig(dir, "{}"), 1, dir / "out", 1, log),
            kExitUsage);
  EXPECT_EQ(RunCommand("gradcheck",
                       WriteConfig(dir, "{\"instances\": 5, \"inject_sign_flip\": \"dpo\"}"),
                       1, dir / "flip", 1, log),
            kExitCheckFailed);
  EXPECT_EQ(RunCommand("gradcheck", WriteConfig(dir, "{\"instances\": 5}"), 1, dir / "ok",
                       2, log),
            kExitOk);
  const std::string csv = Slurp(dir / "ok" / "gradcheck.csv");
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  const auto rows = ParseCsv(csv);
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& r : rows) EXPECT_EQ(r.size(), rows[0].size());
  const json summary = json::parse(Slurp(dir / "ok" / "gradcheck_summary.json"));
  EXPECT_EQ(summary["command"], "gradcheck");
  EXPECT_EQ(summary["seed"], 1);
  EXPECT_TRUE(summary["passed"].get<bool>());
  EXPECT_EQ(summary["config"]["instances"], 5);
  EXPECT_FALSE(summary.contains("timestamp"));
}

TEST(RunCommandTest, WrittenCsvMatchesInMemoryTables) {
  const auto dir = TempDir("schema");
  std::ostringstream log;
  ASSERT_EQ(RunCommand("transitivity", WriteConfig(dir, "{\"betas\": [3]}"), 4,
                       dir / "out", 1, log),
            kExitOk)
      << log.str();
  const CommandOutput out =
      Dispatch("transitivity", json{{"betas", {3}}}, 4, 1);
  for (const auto& [name, table] : out.files) {
    const auto rows = ParseCsv(Slurp(dir / "out" / name));
    ASSERT_EQ(rows.size(), table.num_rows() + 1);
    EXPECT_EQ(rows[0], table.header());
    for (size_t i = 0; i < table.num_rows(); ++i) EXPECT_EQ(rows[i + 1], table.row(i));
  }
}

}  // namespace
}  // namespace prefopt::harness
