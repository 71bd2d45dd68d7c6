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

// Random instance helpers shared by the unit tests.

#ifndef PREFOPT_TESTS_TEST_UTIL_H_
#define PREFOPT_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "prefopt/core.h"
#include "prefopt/losses.h"

namespace prefopt::testing {

inline std::vector<double> Normals(std::mt19937_64& rng, int n,
                                   double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(n);
  for (double& a : v) a = d(rng);
  return v;
}

inline double Uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int UniformInt(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline SpacePtr RandomSpace(std::mt19937_64& rng, int max_contexts,
                            int max_outcomes) {
  const int c = UniformInt(rng, 1, max_contexts);
  std::vector<int> k(c);
  for (int& v : k) v = UniformInt(rng, 2, max_outcomes);
  return OutcomeSpace::Make(k);
}

inline TabularPolicy RandomPolicy(std::mt19937_64& rng, const SpacePtr& s,
                                  double sd = 1.0) {
  return TabularPolicy(s, Normals(rng, s->size(), sd));
}

inline ReferencePolicy RandomReference(std::mt19937_64& rng,
                                       const SpacePtr& s, double sd = 1.0) {
  return ReferencePolicy::FromLogits(s, Normals(rng, s->size(), sd));
}

inline RewardTable RandomReward(std::mt19937_64& rng, const SpacePtr& s,
                                double sd = 1.0) {
  return RewardTable(s, Normals(rng, s->size(), sd));
}

inline PromptDistribution RandomPrompts(std::mt19937_64& rng, int c) {
  std::vector<double> w(c);
  double total = 0.0;
  for (double& a : w) total += (a = Uniform(rng, 0.1, 1.0));
  for (double& a : w) a /= total;
  // Renormalize the last entry so the sum is 1 to rounding.
  double head = 0.0;
  for (int i = 0; i + 1 < c; ++i) head += w[i];
  w[c - 1] = 1.0 - head;
  return PromptDistribution(w);
}

// Random pairs with distinct outcomes; weights random when `weighted`.
inline PreferenceDataset RandomPrefs(std::mt19937_64& rng, const SpacePtr& s,
                                     int n, bool weighted) {
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < n; ++i) {
    const int x = UniformInt(rng, 0, s->num_contexts() - 1);
    const int k = s->num_outcomes(x);
    const int a = UniformInt(rng, 0, k - 1);
    int b = UniformInt(rng, 0, k - 2);
    if (b >= a) ++b;
    pairs.push_back({x, a, b});
  }
  std::vector<double> w;
  if (weighted) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      w.push_back(Uniform(rng, 0.1, 1.0));
      total += w.back();
    }
    for (double& a : w) a /= total;
  }
  return PreferenceDataset(std::move(pairs), std::move(w));
}

inline TripleDataset RandomTriples(std::mt19937_64& rng, const SpacePtr& s,
                                   int n) {
  std::vector<Triple> t;
  std::vector<double> w;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int x = UniformInt(rng, 0, s->num_contexts() - 1);
    const int k = s->num_outcomes(x);
    t.push_back({x, UniformInt(rng, 0, k - 1), UniformInt(rng, 0, k - 1)});
    w.push_back(Uniform(rng, 0.1, 1.0));
    total += w.back();
  }
  for (double& a : w) a /= total;
  return TripleDataset(std::move(t), std::move(w));
}

// Random (pi_w, ref_w, ref_l) with room for a third outcome.
struct ClosedFormInstance {
  double pi_w, ref_w, ref_l, beta;
  SpacePtr space = OutcomeSpace::Make(1, 3);
  ReferencePolicy Ref() const {
    return ReferencePolicy::FromProbs(space, {ref_w, ref_l, 1.0 - ref_w - ref_l});
  }
};

inline ClosedFormInstance RandomClosedFormInstance(std::mt19937_64& rng) {
  ClosedFormInstance c;
  c.pi_w = Uniform(rng, 0.05, 0.9);
  c.ref_w = Uniform(rng, 0.05, 0.6);
  c.ref_l = Uniform(rng, 0.05, 0.9 - c.ref_w);
  c.beta = std::exp(Uniform(rng, std::log(0.2), std::log(5.0)));
  return c;
}

// Three-outcome context (winner, loser, rest) with pi(winner) fixed.
// Scans pi(loser) over multiples of `step` in (0, 1 - pi_w] and returns the
// argmin of `loss`; the last grid point is 1 - pi_w itself.
inline double MinimizeLoserProb(
    const std::function<double(const TabularPolicy&)>& loss,
    const SpacePtr& space, double pi_w, double step) {
  const double cap = 1.0 - pi_w;
  const long n = static_cast<long>(std::floor(cap / step));
  double best = std::numeric_limits<double>::infinity(), arg = 0.0;
  auto visit = [&](double pl) {
    const double rest = std::max(0.0, cap - pl);
    const double v =
        loss(TabularPolicy::FromProbs(space, {pi_w, pl, rest}));
    if (v < best) best = v, arg = pl;
  };
  for (long k = 1; k <= n; ++k) visit(k * step);
  if (cap - n * step > 1e-15) visit(cap);
  return arg;
}

// Projected descent on IPO over n chain or closure arms. The probability-
// space Hessian is bounded by (2 / |D|) 2 deg_max / p_min^2 and p_min is at
// least exp(-s) / n at chain spread s = (n - 1) |tau_inv|; the slowest mode
// decays like 1 / n^2.
inline double IpoProjectedLr(int n, double tau_inv, bool closure) {
  const int pairs = closure ? n * (n - 1) / 2 : n - 1;
  const int deg = closure ? n - 1 : std::min(2, n - 1);
  const double p_min = std::exp(-(n - 1) * std::abs(tau_inv)) / n;
  return 0.9 * pairs * p_min * p_min / (2.0 * deg);
}
inline long IpoProjectedSteps(int n) { return 12000L * n * n; }

// Minimizes a function of one variable: dense scan then golden refinement
// around the best scan point. Handles the min-of-convex losses used here.
inline double Minimize1d(const std::function<double(double)>& f, double lo,
                  double hi) {
  const int n = 4000;
  double best_z = lo, best = f(lo);
  for (int i = 1; i <= n; ++i) {
    const double z = lo + (hi - lo) * i / n;
    const double v = f(z);
    if (v < best) best = v, best_z = z;
  }
  double a = best_z - (hi - lo) / n, b = best_z + (hi - lo) / n;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200; ++it) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (f(c) < f(d)) b = d; else a = c;
  }
  return 0.5 * (a + b);
}

}  // namespace prefopt::testing

#endif  // PREFOPT_TESTS_TEST_UTIL_H_
