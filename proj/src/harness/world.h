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

// Synthetic length-biased world and policy runs shared by the bias-sweep and
// edpo-rm-dist subcommands.

#ifndef PREFOPT_SRC_HARNESS_WORLD_H_
#define PREFOPT_SRC_HARNESS_WORLD_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "prefopt/core.h"
#include "prefopt/harness.h"
#include "prefopt/losses.h"

namespace prefopt::harness {

struct BiasWorld {
  SpacePtr space;
  std::shared_ptr<const RewardTable> oracle;
  std::shared_ptr<const ReferencePolicy> ref;
  double length_weight = 0.0;
  double labeled_longer_fraction = 0.0;
  std::shared_ptr<const PreferenceDataset> labeled;
};

BiasWorld BuildBiasWorld(const WorldConfig& config, uint64_t seed);

// D_rho, its 80/20 split, the reward model trained on the training split and
// the b-grid ensemble trained on subsamples of it.
struct RhoData {
  double rho = 0.0;
  std::shared_ptr<const PreferenceDataset> train;
  std::shared_ptr<const PreferenceDataset> val;
  PromptDistribution val_mu{std::vector<double>{1.0}};
  std::shared_ptr<const RewardTable> r_rho;
  std::shared_ptr<const RewardEnsemble> members;
};

RhoData BuildRhoData(const BiasWorld& world, const WorldConfig& config,
                     double rho, uint64_t seed);

struct MethodResult {
  double val_advantage = 0.0;
  double test_advantage = 0.0;
  std::vector<long> selection;  // e-dpo member counts over training steps
};

// `hyper` is beta, or tau^-1 for ipo.
MethodResult RunMethod(const std::string& method, double hyper,
                       const BiasWorld& world, const RhoData& data,
                       const PolicyRunConfig& run, uint64_t seed);

// E_mu E_pi r - E_mu E_ref r.
double OracleAdvantage(const ConditionalDistribution& policy,
                       const BiasWorld& world, const PromptDistribution& mu);

}  // namespace prefopt::harness

#endif  // PREFOPT_SRC_HARNESS_WORLD_H_
