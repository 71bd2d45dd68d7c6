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

// Synthetic length-biased preference data and reward-model fitting.

#ifndef PREFOPT_SYNTHDATA_H_
#define PREFOPT_SYNTHDATA_H_

#include <cstdint>
#include <vector>

#include "prefopt/core.h"
#include "prefopt/losses.h"

namespace prefopt {

struct OracleSpec {
  SpacePtr space;  // must carry outcome lengths
  std::vector<double> base_reward;
  double length_weight = 0.0;
  uint64_t seed = 0;
};

// (len - mean) / std over every outcome of the space; zeros when all
// lengths are equal.
std::vector<double> NormalizedLengths(const OutcomeSpace& space);

// base_reward + length_weight * normalized length.
RewardTable MakeOracleReward(const OracleSpec& spec);

struct RawPair {
  int x = 0;
  int y1 = 0;
  int y2 = 0;
};

// `count` pairs of distinct outcomes whose lengths differ by a ratio of at
// least 1 + longer_margin, drawn uniformly by rejection.
std::vector<RawPair> SampleRawPairs(const OutcomeSpace& space, int count,
                                    double longer_margin, uint64_t seed);

enum class RelabelMode { kSample, kArgmax };

// Winner drawn from the BT probability (sample) or the higher reward, ties to
// y1 (argmax).
PreferenceDataset RelabelBt(const RewardTable& r_oracle,
                            const std::vector<RawPair>& raw, uint64_t seed,
                            RelabelMode mode);

enum class LengthRelation { kLongerWins, kShorterWins, kNeither };

// Longer means a length ratio of at least 1 + longer_margin.
LengthRelation ClassifyPair(const OutcomeSpace& space, const PreferencePair& p,
                            double longer_margin);

// Fraction of pairs whose winner is longer.
double LongerPreferredFraction(const OutcomeSpace& space,
                               const PreferenceDataset& d,
                               double longer_margin = 0.10);

// BT-expected longer-preferred rate of r over raw pairs that qualify.
double ExpectedLongerFraction(const RewardTable& r,
                              const std::vector<RawPair>& raw,
                              double longer_margin = 0.10);

// Bisection on length_weight in [lo, hi] until the BT-expected longer rate
// over `raw` is within `tol` of `target`. Throws PreconditionError when the
// target is not bracketed.
double CalibrateLengthWeight(const SpacePtr& space,
                             const std::vector<double>& base_reward,
                             const std::vector<RawPair>& raw, double target,
                             double longer_margin = 0.10, double lo = -20.0,
                             double hi = 20.0, double tol = 1e-4);

struct BiasedDatasetSpec {
  double rho_bias = 0.5;
  int size = 0;
  double longer_margin = 0.10;
};

// Uniform-weight dataset of spec.size qualifying pairs with
// round(rho_bias * size) longer-preferred. Throws PreconditionError with the
// achievable range when either kind runs short.
PreferenceDataset BuildBiasedDataset(const PreferenceDataset& labeled,
                                     const OutcomeSpace& space,
                                     const BiasedDatasetSpec& spec,
                                     uint64_t seed);

// Same contract as BuildBiasedDataset at fraction b.
PreferenceDataset SubsampleAtBias(const PreferenceDataset& d_rho,
                                  const OutcomeSpace& space, double b,
                                  int size, uint64_t seed,
                                  double longer_margin = 0.10);

struct RewardMleOptions {
  // Adds a shared coefficient on normalized length: r = theta + phi * len.
  bool length_feature = false;
};

// Gradient descent on -E log sigma(r_w - r_l) + l2_reg |params|^2 from
// zero, returned with a zero-mean gauge per context.
RewardTable TrainRewardMle(const PreferenceDataset& d, const SpacePtr& space,
                           double l2_reg, double lr, long steps,
                           const RewardMleOptions& options = {});

// Deterministic split: a seeded shuffle, the first round(train_fraction * n)
// pairs go to the first dataset.
std::pair<PreferenceDataset, PreferenceDataset> SplitDataset(
    const PreferenceDataset& d, double train_fraction, uint64_t seed);

}  // namespace prefopt

#endif  // PREFOPT_SYNTHDATA_H_
