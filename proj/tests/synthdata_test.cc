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

#include "prefopt/synthdata.h"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "prefopt/core.h"
#include "prefopt/errors.h"
#include "prefopt/losses.h"
#include "test_util.h"

namespace prefopt {
namespace {

// Contexts with `k` outcomes of lengths spread over [10, 60].
SpacePtr LengthSpace(std::mt19937_64& rng, int contexts, int k) {
  std::vector<std::vector<int>> lengths(contexts);
  for (auto& row : lengths) {
    for (int y = 0; y < k; ++y) row.push_back(testing::UniformInt(rng, 10, 60));
  }
  return OutcomeSpace::MakeWithLengths(lengths);
}

struct World {
  SpacePtr space;
  std::vector<double> base;
  std::vector<RawPair> raw;
  PreferenceDataset labeled{{{0, 0, 1}}};
};

World MakeWorld(uint64_t seed, double length_weight, int raw_pairs = 6000) {
  std::mt19937_64 rng(seed);
  World w;
  w.space = LengthSpace(rng, 8, 5);
  w.base = testing::Normals(rng, w.space->size(), 1.0);
  w.raw = SampleRawPairs(*w.space, raw_pairs, 0.10, seed + 1);
  w.labeled = RelabelBt(MakeOracleReward({w.space, w.base, length_weight, seed}),
                        w.raw, seed + 2, RelabelMode::kSample);
  return w;
}

std::set<std::tuple<int, int, int>> AsSet(const PreferenceDataset& d) {
  std::set<std::tuple<int, int, int>> s;
  for (const auto& p : d.pairs()) s.insert({p.x, p.y_w, p.y_l});
  return s;
}

TEST(NormalizedLengthsTest, ZeroMeanUnitVariance) {
  auto s = OutcomeSpace::MakeWithLengths({{10, 20}, {30, 40, 50}});
  const auto len = NormalizedLengths(*s);
  double mean = 0.0, var = 0.0;
  for (double v : len) mean += v;
  mean /= len.size();
  for (double v : len) var += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 1e-15);
  EXPECT_NEAR(var / len.size(), 1.0, 1e-14);
  auto flat = OutcomeSpace::MakeWithLengths({{7, 7}});
  for (double v : NormalizedLengths(*flat)) EXPECT_EQ(v, 0.0);
}

TEST(MakeOracleRewardTest, ZeroWeightReturnsBaseExactly) {
  auto s = OutcomeSpace::MakeWithLengths({{10, 20, 35}});
  const std::vector<double> base{0.3, -1.25, 2.0};
  EXPECT_EQ(MakeOracleReward({s, base, 0.0, 7}).values(), base);
}

TEST(MakeOracleRewardTest, LongerOutcomeWinsAtEqualBase) {
  auto s = OutcomeSpace::MakeWithLengths({{10, 20}});
  const auto r = MakeOracleReward({s, {0.5, 0.5}, 0.8, 1});
  EXPECT_GT(r.value(0, 1), r.value(0, 0));
}

TEST(MakeOracleRewardTest, Errors) {
  auto bare = OutcomeSpace::Make(1, 2);
  EXPECT_THROW(MakeOracleReward({bare, {0.0, 0.0}, 1.0, 0}), PreconditionError);
  auto s = OutcomeSpace::MakeWithLengths({{10, 20}});
  EXPECT_THROW(MakeOracleReward({s, {0.0}, 1.0, 0}), ParameterError);
  EXPECT_THROW(MakeOracleReward({nullptr, {}, 1.0, 0}), ParameterError);
}

TEST(MakeOracleRewardTest, DeterministicPerSeed) {
  std::mt19937_64 rng(3);
  auto s = LengthSpace(rng, 3, 4);
  const auto base = testing::Normals(rng, s->size());
  EXPECT_EQ(MakeOracleReward({s, base, 1.3, 9}).values(),
            MakeOracleReward({s, base, 1.3, 9}).values());
}

TEST(SampleRawPairsTest, EveryPairQualifies) {
  std::mt19937_64 rng(4);
  auto s = LengthSpace(rng, 5, 4);
  const auto raw = SampleRawPairs(*s, 2000, 0.10, 11);
  ASSERT_EQ(raw.size(), 2000u);
  for (const auto& p : raw) {
    EXPECT_NE(p.y1, p.y2);
    const double a = s->length(p.x, p.y1), b = s->length(p.x, p.y2);
    EXPECT_TRUE(a >= 1.1 * b || b >= 1.1 * a);
  }
  auto flat = OutcomeSpace::MakeWithLengths({{10, 10}});
  EXPECT_THROW(SampleRawPairs(*flat, 1, 0.10, 0), PreconditionError);
}

TEST(RelabelBtTest, ArgmaxPicksHigherRewardAndTiesGoToFirst) {
  auto s = OutcomeSpace::MakeWithLengths({{10, 20, 30}});
  RewardTable r(s, {1.0, 0.0, 1.0});
  const auto d = RelabelBt(r, {{0, 0, 1}, {0, 1, 0}, {0, 2, 0}, {0, 0, 2}}, 0,
                           RelabelMode::kArgmax);
  EXPECT_EQ(d.pair(0).y_w, 0);
  EXPECT_EQ(d.pair(1).y_w, 0);
  EXPECT_EQ(d.pair(2).y_w, 2);
  EXPECT_EQ(d.pair(3).y_w, 0);
}

TEST(RelabelBtTest, EqualRewardsGiveFairCoin) {
  std::mt19937_64 rng(5);
  auto s = LengthSpace(rng, 4, 4);
  const auto raw = SampleRawPairs(*s, 10000, 0.10, 1);
  const auto d = RelabelBt(RewardTable::Zeros(s), raw, 2, RelabelMode::kSample);
  int first = 0;
  for (int i = 0; i < d.size(); ++i) first += d.pair(i).y_w == raw[i].y1;
  EXPECT_NEAR(first / 1e4, 0.5, 0.02);
  // Longer and shorter are symmetric too.
  EXPECT_NEAR(LongerPreferredFraction(*s, d), 0.5, 0.015);
}

TEST(RelabelBtTest, RepeatIsIdentical) {
  const World a = MakeWorld(6, 1.0), b = MakeWorld(6, 1.0);
  ASSERT_EQ(a.labeled.size(), b.labeled.size());
  for (int i = 0; i < a.labeled.size(); ++i) {
    EXPECT_EQ(a.labeled.pair(i).y_w, b.labeled.pair(i).y_w);
    EXPECT_EQ(a.labeled.pair(i).y_l, b.labeled.pair(i).y_l);
  }
}

TEST(ClassifyPairTest, UsesTheMargin) {
  auto s = OutcomeSpace::MakeWithLengths({{10, 11, 12}});
  EXPECT_EQ(ClassifyPair(*s, {0, 1, 0}, 0.10), LengthRelation::kLongerWins);
  EXPECT_EQ(ClassifyPair(*s, {0, 0, 1}, 0.10), LengthRelation::kShorterWins);
  EXPECT_EQ(ClassifyPair(*s, {0, 2, 1}, 0.10), LengthRelation::kNeither);
}

TEST(CalibrateLengthWeightTest, HitsTarget) {
  std::mt19937_64 rng(7);
  auto s = LengthSpace(rng, 10, 5);
  const auto base = testing::Normals(rng, s->size(), 3.0);
  const auto raw = SampleRawPairs(*s, 5000, 0.10, 8);
  const double w = CalibrateLengthWeight(s, base, raw, 0.61);
  EXPECT_NEAR(ExpectedLongerFraction(MakeOracleReward({s, base, w, 0}), raw),
              0.61, 1e-4);
  EXPECT_THROW(CalibrateLengthWeight(s, base, raw, 0.61, 0.10, 5.0, 20.0),
               PreconditionError);
}

TEST(CalibrateLengthWeightTest, SampledLabelsLandNearTarget) {
  std::mt19937_64 rng(8);
  auto s = LengthSpace(rng, 10, 5);
  const auto base = testing::Normals(rng, s->size(), 3.0);
  const auto raw = SampleRawPairs(*s, 20000, 0.10, 9);
  const double w = CalibrateLengthWeight(s, base, raw, 0.61);
  const auto d = RelabelBt(MakeOracleReward({s, base, w, 0}), raw, 10,
                           RelabelMode::kSample);
  EXPECT_NEAR(LongerPreferredFraction(*s, d), 0.61, 0.01);
}

TEST(BuildBiasedDatasetTest, FractionContract) {
  const World w = MakeWorld(9, 0.5);
  for (double rho : {0.0, 0.2, 0.3, 0.5, 0.8, 1.0}) {
    const auto d = BuildBiasedDataset(w.labeled, *w.space, {rho, 1000, 0.10}, 3);
    EXPECT_EQ(d.size(), 1000);
    EXPECT_LE(std::abs(LongerPreferredFraction(*w.space, d) - rho), 1e-3 + 1e-12)
        << rho;
    for (double wt : d.weights()) EXPECT_DOUBLE_EQ(wt, 1e-3);
  }
  const auto d = BuildBiasedDataset(w.labeled, *w.space, {0.3, 1000, 0.10}, 4);
  const double f = LongerPreferredFraction(*w.space, d);
  EXPECT_GE(f, 0.299);
  EXPECT_LE(f, 0.301);
}

TEST(BuildBiasedDatasetTest, ShortageReportsAchievableRange) {
  const World w = MakeWorld(10, 0.0, 500);
  try {
    BuildBiasedDataset(w.labeled, *w.space, {1.0, 400, 0.10}, 0);
    FAIL() << "expected PreconditionError";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("achievable range"), std::string::npos)
        << e.what();
  }
  EXPECT_THROW(BuildBiasedDataset(w.labeled, *w.space, {1.5, 10, 0.10}, 0),
               ParameterError);
}

TEST(SubsampleAtBiasTest, BGridAndSeeds) {
  const World w = MakeWorld(11, 0.5);
  const auto d_rho = BuildBiasedDataset(w.labeled, *w.space, {0.5, 2000, 0.10}, 1);
  const auto same = SubsampleAtBias(d_rho, *w.space, 0.5, 300, 2);
  EXPECT_EQ(same.size(), 300);
  EXPECT_NEAR(LongerPreferredFraction(*w.space, same), 0.5, 1.0 / 300);
  for (double b : {0.2, 0.4, 0.5, 0.6, 0.8}) {
    const auto d = SubsampleAtBias(d_rho, *w.space, b, 300, 5);
    EXPECT_LE(std::abs(LongerPreferredFraction(*w.space, d) - b), 1.0 / 300) << b;
  }
  const auto a = SubsampleAtBias(d_rho, *w.space, 0.4, 300, 6);
  const auto b = SubsampleAtBias(d_rho, *w.space, 0.4, 300, 7);
  EXPECT_EQ(LongerPreferredFraction(*w.space, a),
            LongerPreferredFraction(*w.space, b));
  EXPECT_NE(AsSet(a), AsSet(b));
  EXPECT_THROW(SubsampleAtBias(d_rho, *w.space, 0.9, 1900, 0), PreconditionError);
}

TEST(TrainRewardMleTest, SymmetricDataGivesZeroDifferences) {
  auto s = OutcomeSpace::Make(2, 3);
  PreferenceDataset d({{0, 0, 1}, {0, 1, 0}, {0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                       {1, 2, 0}});
  const auto r = TrainRewardMle(d, s, 0.0, 0.5, 2000);
  for (double v : r.values()) EXPECT_NEAR(v, 0.0, 1e-6);
}

TEST(TrainRewardMleTest, UnregularizedSinglePairDiverges) {
  auto s = OutcomeSpace::Make(1, 2);
  PreferenceDataset d({{0, 0, 1}});
  double prev = 0.0;
  for (long steps : {10L, 100L, 1000L, 10000L, 100000L}) {
    const auto r = TrainRewardMle(d, s, 0.0, 1.0, steps);
    const double diff = r.value(0, 0) - r.value(0, 1);
    EXPECT_GT(diff, prev + 1.0);
    prev = diff;
  }
}

TEST(TrainRewardMleTest, RegularizedSinglePairMatchesScalarOracle) {
  auto s = OutcomeSpace::Make(1, 2);
  PreferenceDataset d({{0, 0, 1}});
  const auto r = TrainRewardMle(d, s, 0.1, 0.5, 20000);
  // Symmetric minimizer r = (+d/2, -d/2): softplus(-d) + 0.1 (d^2 / 2).
  const double want = testing::Minimize1d(
      [](double v) { return Softplus(-v) + 0.05 * v * v; }, 0.0, 10.0);
  EXPECT_NEAR(r.value(0, 0) - r.value(0, 1), want, 1e-6);
  EXPECT_NEAR(r.value(0, 0) + r.value(0, 1), 0.0, 1e-12);
}

TEST(TrainRewardMleTest, RegularizedFitIsFiniteAndDeterministic) {
  const World w = MakeWorld(12, 1.0, 1500);
  for (bool feature : {false, true}) {
    const auto a = TrainRewardMle(w.labeled, w.space, 1e-3, 1.0, 500, {feature});
    const auto b = TrainRewardMle(w.labeled, w.space, 1e-3, 1.0, 500, {feature});
    EXPECT_EQ(a.values(), b.values());
    for (int x = 0; x < w.space->num_contexts(); ++x) {
      double mean = 0.0;
      for (int y = 0; y < w.space->num_outcomes(x); ++y) {
        ASSERT_TRUE(std::isfinite(a.value(x, y)));
        mean += a.value(x, y);
      }
      EXPECT_NEAR(mean, 0.0, 1e-12);
    }
    // Any finite table induces BT probabilities strictly inside (0, 1).
    for (const auto& p : w.labeled.pairs()) {
      const double q = BradleyTerryProb(a, p.x, p.y_w, p.y_l);
      EXPECT_GT(q, 0.0);
      EXPECT_LT(q, 1.0);
    }
  }
}

TEST(TrainRewardMleTest, LengthFeatureLearnsLengthPreference) {
  const World w = MakeWorld(13, 2.0, 4000);
  const auto r = TrainRewardMle(w.labeled, w.space, 1e-3, 1.0, 500, {true});
  const auto len = NormalizedLengths(*w.space);
  double cov = 0.0;
  for (size_t i = 0; i < len.size(); ++i) cov += len[i] * r.values()[i];
  EXPECT_GT(cov, 0.0);
}

TEST(TrainRewardMleTest, Errors) {
  auto s = OutcomeSpace::Make(1, 2);
  PreferenceDataset d({{0, 0, 1}});
  EXPECT_THROW(TrainRewardMle(d, s, -1.0, 0.1, 1), ParameterError);
  EXPECT_THROW(TrainRewardMle(d, s, 0.0, 0.0, 1), ParameterError);
}

TEST(SplitDatasetTest, DeterministicPartition) {
  const World w = MakeWorld(14, 0.0, 1000);
  const auto [a, b] = SplitDataset(w.labeled, 0.8, 3);
  EXPECT_EQ(a.size(), 800);
  EXPECT_EQ(b.size(), 200);
  const auto [a2, b2] = SplitDataset(w.labeled, 0.8, 3);
  EXPECT_EQ(AsSet(a), AsSet(a2));
  EXPECT_THROW(SplitDataset(w.labeled, 1.0, 0), ParameterError);
}

}  // namespace
}  // namespace prefopt
