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

#include "world.h"

#include <algorithm>
#include <bit>
#include <random>
#include <utility>

#include "prefopt/optim.h"
#include "prefopt/synthdata.h"

namespace prefopt::harness {
namespace {

uint64_t Bits(double v) { return std::bit_cast<uint64_t>(v); }

RewardTable TrainReward(const PreferenceDataset& d, const SpacePtr& space,
                        const WorldConfig& c) {
  return TrainRewardMle(d, space, c.rm_l2, c.rm_lr, c.rm_steps,
                        {c.rm_length_feature});
}

PromptDistribution ContextMix(const PreferenceDataset& d, int contexts) {
  std::vector<double> w(contexts, 0.0);
  for (int i = 0; i < d.size(); ++i) w[d.pair(i).x] += d.weight(i);
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return PromptDistribution(std::move(w));
}

}  // namespace

BiasWorld BuildBiasWorld(const WorldConfig& c, uint64_t seed) {
  std::mt19937_64 rng(DeriveSeed(seed, {0}));
  std::uniform_int_distribution<int> len(c.length_min, c.length_max);
  std::normal_distribution<double> base_dist(0.0, 1.0);
  std::vector<std::vector<int>> lengths(c.contexts, std::vector<int>(c.outcomes));
  for (auto& row : lengths) {
    for (int& l : row) l = len(rng);
  }
  BiasWorld w;
  w.space = OutcomeSpace::MakeWithLengths(lengths);
  const int n = w.space->size();
  std::vector<double> base(n), ref_logits(n);
  for (double& v : base) v = c.base_reward_std * base_dist(rng);
  for (double& v : ref_logits) v = c.ref_logit_std * base_dist(rng);
  if (c.identical_rewards) std::fill(base.begin(), base.end(), 0.0);
  w.ref = std::make_shared<ReferencePolicy>(
      ReferencePolicy::FromLogits(w.space, ref_logits));

  const auto raw = SampleRawPairs(*w.space, c.raw_pairs, c.longer_margin,
                                  DeriveSeed(seed, {1}));
  w.length_weight = c.identical_rewards
                        ? 0.0
                        : CalibrateLengthWeight(w.space, base, raw,
                                                c.longer_target, c.longer_margin);
  w.oracle = std::make_shared<RewardTable>(
      MakeOracleReward({w.space, base, w.length_weight, seed}));
  w.labeled = std::make_shared<PreferenceDataset>(
      RelabelBt(*w.oracle, raw, DeriveSeed(seed, {2}), RelabelMode::kSample));
  w.labeled_longer_fraction =
      LongerPreferredFraction(*w.space, *w.labeled, c.longer_margin);
  return w;
}

RhoData BuildRhoData(const BiasWorld& w, const WorldConfig& c, double rho,
                     uint64_t seed) {
  RhoData out;
  out.rho = rho;
  const PreferenceDataset d_rho =
      BuildBiasedDataset(*w.labeled, *w.space, {rho, c.dataset_size, c.longer_margin},
                         DeriveSeed(seed, {3, Bits(rho)}));
  auto [train, val] =
      SplitDataset(d_rho, c.train_fraction, DeriveSeed(seed, {4, Bits(rho)}));
  out.train = std::make_shared<PreferenceDataset>(std::move(train));
  out.val = std::make_shared<PreferenceDataset>(std::move(val));
  out.val_mu = ContextMix(*out.val, w.space->num_contexts());
  out.r_rho = std::make_shared<RewardTable>(TrainReward(*out.train, w.space, c));
  std::vector<RewardTable> members;
  for (size_t i = 0; i < c.b_grid.size(); ++i) {
    const PreferenceDataset sub =
        SubsampleAtBias(*out.train, *w.space, c.b_grid[i], c.member_size,
                        DeriveSeed(seed, {5, Bits(rho), i}), c.longer_margin);
    members.push_back(TrainReward(sub, w.space, c));
  }
  out.members = std::make_shared<RewardEnsemble>(std::move(members));
  return out;
}

double OracleAdvantage(const ConditionalDistribution& policy,
                       const BiasWorld& w, const PromptDistribution& mu) {
  return ExpectedReward(policy, *w.oracle, mu) - ExpectedReward(*w.ref, *w.oracle, mu);
}

MethodResult RunMethod(const std::string& method, double hyper,
                       const BiasWorld& w, const RhoData& data,
                       const PolicyRunConfig& run, uint64_t seed) {
  LossSpec spec;
  spec.ref = w.ref;
  Hyperparams hp;
  hp.steps = run.steps;
  hp.beta = hyper;
  hp.lr = run.lr * std::min(1.0, 1.0 / (hyper * hyper));
  AnnealSchedule schedule = AnnealSchedule::Constant(0.0);
  const auto annealed = AnnealSchedule::Linear(run.gamma_start, run.gamma_end);
  auto triples = [&] {
    return std::make_shared<TripleDataset>(TripleDataset::FromPairs(*data.train));
  };
  if (method == "dpo") {
    spec.kind = LossKind::kDpo;
    spec.prefs = data.train;
  } else if (method == "ipo") {
    spec.kind = LossKind::kIpo;
    spec.prefs = data.train;
    hp.beta = 1.0;
    hp.tau_inv = hyper;
    hp.lr = run.ipo_lr;
  } else if (method == "p-dpo") {
    spec.kind = LossKind::kPdpo;
    spec.prefs = data.train;
    spec.kl_mode = KlMode::kExact;
    schedule = annealed;
  } else if (method == "d-dpo") {
    spec.kind = LossKind::kDistill;
    spec.triples = triples();
    spec.target = data.r_rho;
  } else if (method == "dp-dpo") {
    spec.kind = LossKind::kPdistill;
    spec.triples = triples();
    spec.ensemble = std::make_shared<RewardEnsemble>(
        std::vector<RewardTable>{*data.r_rho});
    schedule = annealed;
  } else if (method == "e-dpo") {
    spec.kind = LossKind::kPdistill;
    spec.triples = triples();
    spec.ensemble = data.members;
    spec.batch_size = std::min(run.batch_size, data.train->size());
    spec.batch_seed = seed;
    schedule = annealed;
  } else {
    throw ConfigError("unknown method '" + method + "'");
  }
  GdOptions options;
  options.record_pairs = {data.train->pair(0)};
  const bool track = method == "e-dpo";
  options.record_every = track ? 1 : run.steps;
  GdResult res = GradientDescent(spec, w.ref->AsPolicy(), hp, schedule, options);

  MethodResult out;
  out.test_advantage = OracleAdvantage(
      res.policy, w, PromptDistribution::Uniform(w.space->num_contexts()));
  out.val_advantage = OracleAdvantage(res.policy, w, data.val_mu);
  if (track) {
    // The last record re-evaluates the final policy on the full batch; only
    // the training steps count.
    RunTrajectory steps = res.trajectory;
    if (!steps.records.empty() && steps.records.back().step == run.steps) {
      steps.records.pop_back();
    }
    out.selection = MemberSelectionHistogram(steps, data.members->size());
  }
  return out;
}

}  // namespace prefopt::harness
