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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>

#include "prefopt/errors.h"

namespace prefopt {
namespace {

bool Longer(int a, int b, double margin) {
  return static_cast<double>(a) >= (1.0 + margin) * static_cast<double>(b);
}

PreferenceDataset SelectAtFraction(const PreferenceDataset& source,
                                   const OutcomeSpace& space, double fraction,
                                   int size, double margin, uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ParameterError("bias fraction must lie in [0, 1]");
  }
  if (size < 1) throw ParameterError("dataset size must be positive");
  std::vector<int> longer, shorter;
  for (int i = 0; i < source.size(); ++i) {
    switch (ClassifyPair(space, source.pair(i), margin)) {
      case LengthRelation::kLongerWins:
        longer.push_back(i);
        break;
      case LengthRelation::kShorterWins:
        shorter.push_back(i);
        break;
      case LengthRelation::kNeither:
        break;
    }
  }
  const int n_long = static_cast<int>(std::lround(fraction * size));
  const int n_short = size - n_long;
  if (n_long > static_cast<int>(longer.size()) ||
      n_short > static_cast<int>(shorter.size())) {
    const int lo = std::max(0, size - static_cast<int>(shorter.size()));
    const int hi = std::min(size, static_cast<int>(longer.size()));
    std::ostringstream msg;
    msg << "cannot reach longer-preferred fraction " << fraction << " at size "
        << size << " (" << longer.size() << " longer-wins, " << shorter.size()
        << " shorter-wins pairs available)";
    if (lo <= hi) {
      msg << "; achievable range [" << static_cast<double>(lo) / size << ", "
          << static_cast<double>(hi) / size << "]";
    } else {
      msg << "; no fraction is achievable at this size";
    }
    throw PreconditionError(msg.str());
  }
  std::mt19937_64 rng(seed);
  std::shuffle(longer.begin(), longer.end(), rng);
  std::shuffle(shorter.begin(), shorter.end(), rng);
  std::vector<int> chosen(longer.begin(), longer.begin() + n_long);
  chosen.insert(chosen.end(), shorter.begin(), shorter.begin() + n_short);
  std::shuffle(chosen.begin(), chosen.end(), rng);
  std::vector<PreferencePair> pairs;
  pairs.reserve(size);
  for (int i : chosen) pairs.push_back(source.pair(i));
  return PreferenceDataset(std::move(pairs));
}

}  // namespace

std::vector<double> NormalizedLengths(const OutcomeSpace& space) {
  std::vector<double> len(space.size());
  for (int x = 0; x < space.num_contexts(); ++x) {
    for (int y = 0; y < space.num_outcomes(x); ++y) {
      len[space.Index(x, y)] = space.length(x, y);
    }
  }
  const double mean = std::accumulate(len.begin(), len.end(), 0.0) / len.size();
  double var = 0.0;
  for (double v : len) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / len.size());
  for (double& v : len) v = sd > 0.0 ? (v - mean) / sd : 0.0;
  return len;
}

RewardTable MakeOracleReward(const OracleSpec& spec) {
  if (!spec.space) throw ParameterError("oracle spec has no outcome space");
  if (!spec.space->has_lengths()) {
    throw PreconditionError("oracle reward needs outcome lengths");
  }
  if (static_cast<int>(spec.base_reward.size()) != spec.space->size()) {
    throw ParameterError("base reward does not match the outcome space");
  }
  if (spec.length_weight == 0.0) return RewardTable(spec.space, spec.base_reward);
  const std::vector<double> len = NormalizedLengths(*spec.space);
  std::vector<double> r(spec.base_reward);
  for (size_t i = 0; i < r.size(); ++i) r[i] += spec.length_weight * len[i];
  return RewardTable(spec.space, std::move(r));
}

std::vector<RawPair> SampleRawPairs(const OutcomeSpace& space, int count,
                                    double longer_margin, uint64_t seed) {
  if (!space.has_lengths()) throw PreconditionError("raw pairs need lengths");
  // Contexts with no qualifying pair would make rejection loop forever.
  bool any = false;
  for (int x = 0; x < space.num_contexts() && !any; ++x) {
    for (int a = 0; a < space.num_outcomes(x) && !any; ++a) {
      for (int b = 0; b < space.num_outcomes(x) && !any; ++b) {
        any = Longer(space.length(x, a), space.length(x, b), longer_margin);
      }
    }
  }
  if (!any) throw PreconditionError("no outcome pair differs enough in length");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ctx(0, space.num_contexts() - 1);
  std::vector<RawPair> out;
  out.reserve(count);
  while (static_cast<int>(out.size()) < count) {
    const int x = ctx(rng);
    const int k = space.num_outcomes(x);
    std::uniform_int_distribution<int> first(0, k - 1);
    std::uniform_int_distribution<int> second(0, k - 2);
    const int a = first(rng);
    int b = second(rng);
    if (b >= a) ++b;
    const int la = space.length(x, a), lb = space.length(x, b);
    if (Longer(la, lb, longer_margin) || Longer(lb, la, longer_margin)) {
      out.push_back({x, a, b});
    }
  }
  return out;
}

PreferenceDataset RelabelBt(const RewardTable& r_oracle,
                            const std::vector<RawPair>& raw, uint64_t seed,
                            RelabelMode mode) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<PreferencePair> pairs;
  pairs.reserve(raw.size());
  for (const auto& p : raw) {
    if (p.y1 == p.y2) throw ParameterError("raw pair with identical outcomes");
    bool first_wins;
    if (mode == RelabelMode::kArgmax) {
      first_wins = r_oracle.value(p.x, p.y1) >= r_oracle.value(p.x, p.y2);
    } else {
      first_wins = unif(rng) < BradleyTerryProb(r_oracle, p.x, p.y1, p.y2);
    }
    pairs.push_back(first_wins ? PreferencePair{p.x, p.y1, p.y2}
                               : PreferencePair{p.x, p.y2, p.y1});
  }
  return PreferenceDataset(std::move(pairs));
}

LengthRelation ClassifyPair(const OutcomeSpace& space, const PreferencePair& p,
                            double longer_margin) {
  const int lw = space.length(p.x, p.y_w), ll = space.length(p.x, p.y_l);
  if (Longer(lw, ll, longer_margin)) return LengthRelation::kLongerWins;
  if (Longer(ll, lw, longer_margin)) return LengthRelation::kShorterWins;
  return LengthRelation::kNeither;
}

double LongerPreferredFraction(const OutcomeSpace& space,
                               const PreferenceDataset& d,
                               double longer_margin) {
  int n = 0;
  for (const auto& p : d.pairs()) {
    n += ClassifyPair(space, p, longer_margin) == LengthRelation::kLongerWins;
  }
  return static_cast<double>(n) / d.size();
}

double ExpectedLongerFraction(const RewardTable& r,
                              const std::vector<RawPair>& raw,
                              double longer_margin) {
  const OutcomeSpace& space = *r.space();
  double total = 0.0;
  int n = 0;
  for (const auto& p : raw) {
    const int l1 = space.length(p.x, p.y1), l2 = space.length(p.x, p.y2);
    const double p1 = BradleyTerryProb(r, p.x, p.y1, p.y2);
    if (Longer(l1, l2, longer_margin)) {
      total += p1;
    } else if (Longer(l2, l1, longer_margin)) {
      total += 1.0 - p1;
    } else {
      continue;
    }
    ++n;
  }
  if (n == 0) throw PreconditionError("no qualifying raw pairs");
  return total / n;
}

double CalibrateLengthWeight(const SpacePtr& space,
                             const std::vector<double>& base_reward,
                             const std::vector<RawPair>& raw, double target,
                             double longer_margin, double lo, double hi,
                             double tol) {
  auto rate = [&](double w) {
    return ExpectedLongerFraction(
        MakeOracleReward({space, base_reward, w, 0}), raw, longer_margin);
  };
  double f_lo = rate(lo) - target, f_hi = rate(hi) - target;
  if (f_lo > 0.0 || f_hi < 0.0) {
    throw PreconditionError("length-bias target is not bracketed");
  }
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double f = rate(mid) - target;
    if (std::abs(f) <= tol) break;
    if (f < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return mid;
}

PreferenceDataset BuildBiasedDataset(const PreferenceDataset& labeled,
                                     const OutcomeSpace& space,
                                     const BiasedDatasetSpec& spec,
                                     uint64_t seed) {
  return SelectAtFraction(labeled, space, spec.rho_bias, spec.size,
                          spec.longer_margin, seed);
}

PreferenceDataset SubsampleAtBias(const PreferenceDataset& d_rho,
                                  const OutcomeSpace& space, double b,
                                  int size, uint64_t seed,
                                  double longer_margin) {
  return SelectAtFraction(d_rho, space, b, size, longer_margin, seed);
}

RewardTable TrainRewardMle(const PreferenceDataset& d, const SpacePtr& space,
                           double l2_reg, double lr, long steps,
                           const RewardMleOptions& options) {
  if (!(l2_reg >= 0.0)) throw ParameterError("l2_reg must be nonnegative");
  if (!(lr > 0.0)) throw ParameterError("lr must be positive");
  if (steps < 0) throw ParameterError("steps must be nonnegative");
  d.Validate(*space);
  const int n = space->size();
  std::vector<double> len;
  if (options.length_feature) len = NormalizedLengths(*space);

  std::vector<int> iw(d.size()), il(d.size());
  for (int i = 0; i < d.size(); ++i) {
    iw[i] = space->Index(d.pair(i).x, d.pair(i).y_w);
    il[i] = space->Index(d.pair(i).x, d.pair(i).y_l);
  }
  std::vector<double> theta(n, 0.0), grad(n);
  double phi = 0.0;
  for (long t = 0; t < steps; ++t) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_phi = 0.0;
    for (int i = 0; i < d.size(); ++i) {
      double m = theta[iw[i]] - theta[il[i]];
      if (options.length_feature) m += phi * (len[iw[i]] - len[il[i]]);
      const double g = -d.weight(i) * Sigmoid(-m);
      grad[iw[i]] += g;
      grad[il[i]] -= g;
      if (options.length_feature) grad_phi += g * (len[iw[i]] - len[il[i]]);
    }
    for (int j = 0; j < n; ++j) theta[j] -= lr * (grad[j] + 2.0 * l2_reg * theta[j]);
    if (options.length_feature) phi -= lr * (grad_phi + 2.0 * l2_reg * phi);
  }
  std::vector<double> r(theta);
  if (options.length_feature) {
    for (int j = 0; j < n; ++j) r[j] += phi * len[j];
  }
  for (int x = 0; x < space->num_contexts(); ++x) {
    const int off = space->offset(x), k = space->num_outcomes(x);
    double mean = 0.0;
    for (int y = 0; y < k; ++y) mean += r[off + y];
    mean /= k;
    for (int y = 0; y < k; ++y) r[off + y] -= mean;
  }
  return RewardTable(space, std::move(r));
}

std::pair<PreferenceDataset, PreferenceDataset> SplitDataset(
    const PreferenceDataset& d, double train_fraction, uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ParameterError("train fraction must lie in (0, 1)");
  }
  std::vector<int> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train = static_cast<int>(std::lround(train_fraction * d.size()));
  if (n_train < 1 || n_train >= d.size()) {
    throw ParameterError("split leaves an empty side");
  }
  std::vector<PreferencePair> a, b;
  for (int i = 0; i < d.size(); ++i) {
    (i < n_train ? a : b).push_back(d.pair(order[i]));
  }
  return {PreferenceDataset(std::move(a)), PreferenceDataset(std::move(b))};
}

}  // namespace prefopt
