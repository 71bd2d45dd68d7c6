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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "prefopt/harness.h"

namespace prefopt::harness {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void RequireObject(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
}

const json* Find(const json& j, const char* key, std::vector<std::string>& seen) {
  seen.emplace_back(key);
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

[[noreturn]] void BadType(const char* key, const char* want) {
  throw ConfigError(std::string("config key '") + key + "' must be " + want);
}

double AsDouble(const json& v, const char* key) {
  if (!v.is_number()) BadType(key, "a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) BadType(key, "finite");
  return d;
}

long AsLong(const json& v, const char* key) {
  if (!v.is_number_integer()) BadType(key, "an integer");
  return v.get<long>();
}

void Read(const json& j, const char* key, double& out,
          std::vector<std::string>& seen) {
  if (const json* v = Find(j, key, seen)) out = AsDouble(*v, key);
}

void Read(const json& j, const char* key, int& out,
          std::vector<std::string>& seen) {
  if (const json* v = Find(j, key, seen)) out = static_cast<int>(AsLong(*v, key));
}

void Read(const json& j, const char* key, long& out,
          std::vector<std::string>& seen) {
  if (const json* v = Find(j, key, seen)) out = AsLong(*v, key);
}

void Read(const json& j, const char* key, bool& out,
          std::vector<std::string>& seen) {
  if (const json* v = Find(j, key, seen)) {
    if (!v->is_boolean()) BadType(key, "a boolean");
    out = v->get<bool>();
  }
}

void Read(const json& j, const char* key, std::string& out,
          std::vector<std::string>& seen) {
  if (const json* v = Find(j, key, seen)) {
    if (!v->is_string()) BadType(key, "a string");
    out = v->get<std::string>();
  }
}

const json* FindList(const json& j, const char* key,
                     std::vector<std::string>& seen) {
  const json* v = Find(j, key, seen);
  if (v == nullptr) return nullptr;
  if (!v->is_array()) BadType(key, "a list");
  if (v->empty()) BadType(key, "a nonempty list");
  return v;
}

void Read(const json& j, const char* key, std::vector<double>& out,
          std::vector<std::string>& seen) {
  if (const json* v = FindList(j, key, seen)) {
    out.clear();
    for (const auto& e : *v) out.push_back(AsDouble(e, key));
  }
}

void Read(const json& j, const char* key, std::vector<int>& out,
          std::vector<std::string>& seen) {
  if (const json* v = FindList(j, key, seen)) {
    out.clear();
    for (const auto& e : *v) out.push_back(static_cast<int>(AsLong(e, key)));
  }
}

void Read(const json& j, const char* key, std::vector<std::string>& out,
          std::vector<std::string>& seen) {
  if (const json* v = FindList(j, key, seen)) {
    out.clear();
    for (const auto& e : *v) {
      if (!e.is_string()) BadType(key, "a list of strings");
      out.push_back(e.get<std::string>());
    }
  }
}

void Read(const json& j, const char* key, std::vector<std::pair<int, int>>& out,
          std::vector<std::string>& seen) {
  if (const json* v = FindList(j, key, seen)) {
    out.clear();
    for (const auto& e : *v) {
      if (!e.is_array() || e.size() != 2) BadType(key, "a list of [winner, loser]");
      out.emplace_back(static_cast<int>(AsLong(e[0], key)),
                       static_cast<int>(AsLong(e[1], key)));
    }
  }
}

void RejectUnknown(const json& j, const std::vector<std::string>& seen) {
  const std::set<std::string> known(seen.begin(), seen.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw ConfigError("unknown config key '" + it.key() + "'");
    }
  }
}

void Require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

void RequireMethods(const std::vector<std::string>& methods,
                    const std::set<std::string>& allowed) {
  for (const auto& m : methods) {
    if (!allowed.count(m)) throw ConfigError("unknown method '" + m + "'");
  }
  const std::set<std::string> unique(methods.begin(), methods.end());
  Require(unique.size() == methods.size(), "methods must be distinct");
}

void RequirePositive(const std::vector<double>& v, const char* what) {
  for (double x : v) Require(x > 0.0, std::string(what) + " must be positive");
}

void RequireFractions(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    Require(x >= 0.0 && x <= 1.0, std::string(what) + " must lie in [0, 1]");
  }
}

}  // namespace

GradcheckConfig GradcheckConfig::FromJson(const json& j) {
  RequireObject(j);
  GradcheckConfig c;
  std::vector<std::string> seen;
  Read(j, "losses", c.losses, seen);
  Read(j, "instances", c.instances, seen);
  Read(j, "epsilons", c.epsilons, seen);
  Read(j, "tolerance", c.tolerance, seen);
  Read(j, "max_contexts", c.max_contexts, seen);
  Read(j, "max_outcomes", c.max_outcomes, seen);
  Read(j, "inject_sign_flip", c.inject_sign_flip, seen);
  RejectUnknown(j, seen);
  const std::set<std::string> all{"dpo", "ipo", "distill", "pdistill", "pdpo"};
  RequireMethods(c.losses, all);
  Require(c.instances >= 1, "instances >= 1");
  for (double e : c.epsilons) Require(e >= 1e-8 && e <= 1e-3, "epsilons in [1e-8, 1e-3]");
  Require(c.tolerance > 0.0, "tolerance > 0");
  Require(c.max_contexts >= 1, "max_contexts >= 1");
  Require(c.max_outcomes >= 2, "max_outcomes >= 2");
  Require(c.inject_sign_flip.empty() || all.count(c.inject_sign_flip),
          "inject_sign_flip names a loss");
  return c;
}

ordered_json GradcheckConfig::ToJson() const {
  return {{"losses", losses},
          {"instances", instances},
          {"epsilons", epsilons},
          {"tolerance", tolerance},
          {"max_contexts", max_contexts},
          {"max_outcomes", max_outcomes},
          {"inject_sign_flip", inject_sign_flip}};
}

DegeneracyConfig DegeneracyConfig::FromJson(const json& j) {
  RequireObject(j);
  DegeneracyConfig c;
  std::vector<std::string> seen;
  Read(j, "methods", c.methods, seen);
  Read(j, "pairs", c.pairs, seen);
  Read(j, "unseen", c.unseen, seen);
  Read(j, "beta", c.beta, seen);
  Read(j, "lr", c.lr, seen);
  Read(j, "steps", c.steps, seen);
  Read(j, "record_every", c.record_every, seen);
  Read(j, "gamma", c.gamma, seen);
  Read(j, "kl_mode", c.kl_mode, seen);
  Read(j, "rm_l2", c.rm_l2, seen);
  Read(j, "rm_lr", c.rm_lr, seen);
  Read(j, "rm_steps", c.rm_steps, seen);
  Read(j, "pair_list", c.pair_list, seen);
  RejectUnknown(j, seen);
  RequireMethods(c.methods, {"dpo", "p-dpo", "d-dpo"});
  Require(c.pairs >= 1, "pairs >= 1");
  Require(c.unseen >= 0, "unseen >= 0");
  Require(c.beta > 0.0 && c.lr > 0.0, "beta and lr positive");
  Require(c.steps >= 1 && c.record_every >= 1, "steps and record_every >= 1");
  Require(c.gamma > 0.0, "gamma > 0");
  Require(c.kl_mode == "exact" || c.kl_mode == "empirical",
          "kl_mode is exact or empirical");
  Require(c.rm_l2 >= 0.0 && c.rm_lr > 0.0 && c.rm_steps >= 1,
          "reward-model training parameters");
  return c;
}

ordered_json DegeneracyConfig::ToJson() const {
  ordered_json pl = ordered_json::array();
  for (const auto& [w, l] : pair_list) pl.push_back({w, l});
  return {{"methods", methods}, {"pairs", pairs},
          {"unseen", unseen},   {"beta", beta},
          {"lr", lr},           {"steps", steps},
          {"record_every", record_every},
          {"gamma", gamma},     {"kl_mode", kl_mode},
          {"rm_l2", rm_l2},     {"rm_lr", rm_lr},
          {"rm_steps", rm_steps},
          {"pair_list", pl}};
}

TransitivityConfig TransitivityConfig::FromJson(const json& j) {
  RequireObject(j);
  TransitivityConfig c;
  std::vector<std::string> seen;
  Read(j, "ns", c.ns, seen);
  Read(j, "betas", c.betas, seen);
  Read(j, "alphas", c.alphas, seen);
  Read(j, "methods", c.methods, seen);
  Read(j, "gap_tolerance", c.gap_tolerance, seen);
  RejectUnknown(j, seen);
  RequireMethods(c.methods, {"ipo", "p-dpo"});
  for (int n : c.ns) Require(n >= 3 && n <= 20, "ns in [3, 20]");
  RequirePositive(c.betas, "betas");
  for (double a : c.alphas) Require(a > 2.0, "alphas > 2");
  Require(c.gap_tolerance > 0.0, "gap_tolerance > 0");
  return c;
}

ordered_json TransitivityConfig::ToJson() const {
  return {{"ns", ns},
          {"betas", betas},
          {"alphas", alphas},
          {"methods", methods},
          {"gap_tolerance", gap_tolerance}};
}

void WorldConfig::Read(const json& j, std::vector<std::string>& seen) {
  using harness::Read;
  Read(j, "contexts", contexts, seen);
  Read(j, "outcomes", outcomes, seen);
  Read(j, "length_min", length_min, seen);
  Read(j, "length_max", length_max, seen);
  Read(j, "base_reward_std", base_reward_std, seen);
  Read(j, "ref_logit_std", ref_logit_std, seen);
  Read(j, "raw_pairs", raw_pairs, seen);
  Read(j, "longer_margin", longer_margin, seen);
  Read(j, "longer_target", longer_target, seen);
  Read(j, "dataset_size", dataset_size, seen);
  Read(j, "train_fraction", train_fraction, seen);
  Read(j, "b_grid", b_grid, seen);
  Read(j, "member_size", member_size, seen);
  Read(j, "rm_l2", rm_l2, seen);
  Read(j, "rm_lr", rm_lr, seen);
  Read(j, "rm_steps", rm_steps, seen);
  Read(j, "rm_length_feature", rm_length_feature, seen);
  Read(j, "identical_rewards", identical_rewards, seen);
  Require(contexts >= 1 && outcomes >= 2, "contexts >= 1, outcomes >= 2");
  Require(length_min >= 1 && length_max > length_min, "1 <= length_min < length_max");
  Require(base_reward_std >= 0.0 && ref_logit_std >= 0.0, "stds nonnegative");
  Require(raw_pairs >= 2 && dataset_size >= 2 && member_size >= 1, "sizes");
  Require(longer_margin >= 0.0, "longer_margin >= 0");
  Require(longer_target > 0.0 && longer_target < 1.0, "longer_target in (0, 1)");
  Require(train_fraction > 0.0 && train_fraction < 1.0, "train_fraction in (0, 1)");
  RequireFractions(b_grid, "b_grid");
  Require(rm_l2 >= 0.0 && rm_lr > 0.0 && rm_steps >= 1, "reward-model training");
}

void WorldConfig::Write(ordered_json& j) const {
  j["contexts"] = contexts;
  j["outcomes"] = outcomes;
  j["length_min"] = length_min;
  j["length_max"] = length_max;
  j["base_reward_std"] = base_reward_std;
  j["ref_logit_std"] = ref_logit_std;
  j["raw_pairs"] = raw_pairs;
  j["longer_margin"] = longer_margin;
  j["longer_target"] = longer_target;
  j["dataset_size"] = dataset_size;
  j["train_fraction"] = train_fraction;
  j["b_grid"] = b_grid;
  j["member_size"] = member_size;
  j["rm_l2"] = rm_l2;
  j["rm_lr"] = rm_lr;
  j["rm_steps"] = rm_steps;
  j["rm_length_feature"] = rm_length_feature;
  j["identical_rewards"] = identical_rewards;
}

void PolicyRunConfig::Read(const json& j, std::vector<std::string>& seen) {
  using harness::Read;
  Read(j, "steps", steps, seen);
  Read(j, "lr", lr, seen);
  Read(j, "ipo_lr", ipo_lr, seen);
  Read(j, "gamma_start", gamma_start, seen);
  Read(j, "gamma_end", gamma_end, seen);
  Read(j, "batch_size", batch_size, seen);
  Require(steps >= 1, "steps >= 1");
  Require(lr > 0.0 && ipo_lr > 0.0, "learning rates positive");
  Require(gamma_start >= 0.0 && gamma_end >= 0.0, "gammas nonnegative");
  Require(batch_size >= 1, "batch_size >= 1");
}

void PolicyRunConfig::Write(ordered_json& j) const {
  j["steps"] = steps;
  j["lr"] = lr;
  j["ipo_lr"] = ipo_lr;
  j["gamma_start"] = gamma_start;
  j["gamma_end"] = gamma_end;
  j["batch_size"] = batch_size;
}

BiasSweepConfig BiasSweepConfig::FromJson(const json& j) {
  RequireObject(j);
  BiasSweepConfig c;
  std::vector<std::string> seen;
  c.world.Read(j, seen);
  c.run.Read(j, seen);
  Read(j, "rhos", c.rhos, seen);
  Read(j, "seeds", c.seeds, seen);
  Read(j, "methods", c.methods, seen);
  Read(j, "betas", c.betas, seen);
  Read(j, "tau_invs", c.tau_invs, seen);
  Read(j, "distill_rhos", c.distill_rhos, seen);
  RejectUnknown(j, seen);
  RequireFractions(c.rhos, "rhos");
  RequireFractions(c.distill_rhos, "distill_rhos");
  Require(c.seeds >= 1, "seeds >= 1");
  RequireMethods(c.methods, {"dpo", "ipo", "d-dpo", "p-dpo", "dp-dpo", "e-dpo"});
  RequirePositive(c.betas, "betas");
  return c;
}

ordered_json BiasSweepConfig::ToJson() const {
  ordered_json j;
  world.Write(j);
  run.Write(j);
  j["rhos"] = rhos;
  j["seeds"] = seeds;
  j["methods"] = methods;
  j["betas"] = betas;
  j["tau_invs"] = tau_invs;
  j["distill_rhos"] = distill_rhos;
  return j;
}

EdpoRmDistConfig EdpoRmDistConfig::FromJson(const json& j) {
  RequireObject(j);
  EdpoRmDistConfig c;
  std::vector<std::string> seen;
  c.world.Read(j, seen);
  c.run.Read(j, seen);
  Read(j, "rhos", c.rhos, seen);
  Read(j, "seeds", c.seeds, seen);
  Read(j, "beta", c.beta, seen);
  RejectUnknown(j, seen);
  RequireFractions(c.rhos, "rhos");
  Require(c.seeds >= 1, "seeds >= 1");
  Require(c.beta > 0.0, "beta > 0");
  return c;
}

ordered_json EdpoRmDistConfig::ToJson() const {
  ordered_json j;
  world.Write(j);
  run.Write(j);
  j["rhos"] = rhos;
  j["seeds"] = seeds;
  j["beta"] = beta;
  return j;
}

json LoadConfigFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " +
                      e.what());
  }
}

}  // namespace prefopt::harness
