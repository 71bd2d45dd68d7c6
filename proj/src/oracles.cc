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

#include "prefopt/oracles.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "prefopt/errors.h"

namespace prefopt {
namespace {

void CheckOpenUnit(double v, const char* what) {
  if (!(v > 0.0 && v < 1.0)) {
    throw ParameterError(std::string(what) + " must lie in (0, 1)");
  }
}

PsiSolution WithSpread(std::vector<double> psi) {
  PsiSolution s;
  s.psi = std::move(psi);
  if (!s.psi.empty()) {
    const auto [lo, hi] = std::minmax_element(s.psi.begin(), s.psi.end());
    s.psi_inf = *hi - *lo;
  }
  return s;
}

int Find(std::vector<int>& parent, int a) {
  while (parent[a] != a) a = parent[a] = parent[parent[a]];
  return a;
}

// Compositions of `total` into `k` nonnegative parts, lexicographic.
void Compositions(int total, int k, std::vector<int>& cur,
                  std::vector<std::vector<int>>& out) {
  if (k == 1) {
    cur.push_back(total);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (int v = 0; v <= total; ++v) {
    cur.push_back(v);
    Compositions(total - v, k - 1, cur, out);
    cur.pop_back();
  }
}

int GridDivisions(double grid_step) {
  if (!(grid_step > 0.0 && grid_step <= 1.0)) {
    throw ParameterError("grid_step must be in (0, 1]");
  }
  const double n = std::round(1.0 / grid_step);
  if (std::abs(n * grid_step - 1.0) > 1e-9) {
    throw ParameterError("grid_step must divide 1");
  }
  return static_cast<int>(n);
}

}  // namespace

PreferenceDataset ChainPreferences::Dataset() const {
  if (n < 2) throw ParameterError("chain needs at least 2 arms");
  std::vector<PreferencePair> pairs;
  if (kind == ChainKind::kChain) {
    for (int i = 0; i + 1 < n; ++i) pairs.push_back({0, i + 1, i});
  } else {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) pairs.push_back({0, j, i});
    }
  }
  return PreferenceDataset(std::move(pairs));
}

double PdpoClosedForm(double pi_w, double ref_w, double ref_l, double alpha,
                      double beta) {
  if (!(alpha > 1.0)) throw ParameterError("alpha must exceed 1");
  if (!(beta > 0.0)) throw ParameterError("beta must be positive");
  CheckOpenUnit(pi_w, "pi_w");
  CheckOpenUnit(ref_w, "ref_w");
  CheckOpenUnit(ref_l, "ref_l");
  const double log_pi_l = -std::log(alpha - 1.0) / beta + std::log(pi_w) +
                          std::log(ref_l / ref_w);
  return std::min(1.0 - pi_w, std::exp(log_pi_l));
}

double DdpoClosedForm(double pi_w, double ref_w, double ref_l,
                      double r_diff_lw, double beta) {
  if (!(beta > 0.0)) throw ParameterError("beta must be positive");
  if (!std::isfinite(r_diff_lw)) throw ParameterError("reward gap must be finite");
  CheckOpenUnit(pi_w, "pi_w");
  CheckOpenUnit(ref_w, "ref_w");
  CheckOpenUnit(ref_l, "ref_l");
  const double log_pi_l =
      r_diff_lw / beta + std::log(pi_w) + std::log(ref_l / ref_w);
  return std::min(1.0 - pi_w, std::exp(log_pi_l));
}

PsiSolution IpoChainSolution(int n, double tau_inv, ChainKind kind) {
  if (n < 2) throw ParameterError("chain needs at least 2 arms");
  if (!std::isfinite(tau_inv)) throw ParameterError("tau_inv must be finite");
  const double spacing =
      kind == ChainKind::kChain ? tau_inv : 2.0 * tau_inv / n;
  std::vector<double> psi(n);
  const double mid = (n - 1) / 2.0;
  for (int k = 0; k < n; ++k) psi[k] = (k - mid) * spacing;
  PsiSolution s = WithSpread(std::move(psi));
  s.psi_inf = (n - 1) * std::abs(spacing);
  return s;
}

PsiSolution IpoQuadraticSolve(const PreferenceDataset& prefs,
                              const ReferencePolicy& ref, double tau_inv) {
  if (!std::isfinite(tau_inv)) throw ParameterError("tau_inv must be finite");
  const OutcomeSpace& space = *ref.space();
  prefs.Validate(space);
  const int n = space.size();

  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  for (const auto& p : prefs.pairs()) {
    parent[Find(parent, space.Index(p.x, p.y_w))] =
        Find(parent, space.Index(p.x, p.y_l));
  }

  std::vector<double> psi(n, 0.0);
  std::vector<char> done(n, 0);
  for (int root_seed = 0; root_seed < n; ++root_seed) {
    const int root = Find(parent, root_seed);
    if (done[root]) continue;
    done[root] = 1;
    std::vector<int> nodes;
    for (int j = 0; j < n; ++j) {
      if (Find(parent, j) == root) nodes.push_back(j);
    }
    const int m = static_cast<int>(nodes.size());
    if (m == 1) continue;
    std::vector<int> local(n, -1);
    for (int a = 0; a < m; ++a) local[nodes[a]] = a;

    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < prefs.size(); ++i) {
      const auto& p = prefs.pair(i);
      const int gw = space.Index(p.x, p.y_w);
      const int gl = space.Index(p.x, p.y_l);
      if (local[gw] < 0) continue;
      const int a = local[gw], b = local[gl];
      const double w = prefs.weight(i);
      const double target =
          ref.log_probs()[gw] - ref.log_probs()[gl] + tau_inv;
      lap(a, a) += w;
      lap(b, b) += w;
      lap(a, b) -= w;
      lap(b, a) -= w;
      rhs(a) += w * target;
      rhs(b) -= w * target;
    }
    // rhs sums to zero, so the rank-one term only pins the mean.
    lap.array() += 1.0 / m;
    const Eigen::VectorXd sol = lap.fullPivLu().solve(rhs);
    for (int a = 0; a < m; ++a) psi[nodes[a]] = sol(a);
  }
  return WithSpread(std::move(psi));
}

double GridPointCount(const OutcomeSpace& space, double grid_step) {
  const int divisions = GridDivisions(grid_step);
  double count = 1.0;
  for (int x = 0; x < space.num_contexts(); ++x) {
    const int k = space.num_outcomes(x);
    // C(divisions + k - 1, k - 1)
    double c = 1.0;
    for (int i = 1; i < k; ++i) c = c * (divisions + i) / i;
    count *= std::round(c);
  }
  return count;
}

TabularPolicy GridBruteForce(const GridLossFn& loss, const SpacePtr& space,
                             double grid_step) {
  const int divisions = GridDivisions(grid_step);
  for (int x = 0; x < space->num_contexts(); ++x) {
    if (space->num_outcomes(x) > 4) {
      throw ParameterError("grid oracle supports at most 4 outcomes per context");
    }
  }
  const double count = GridPointCount(*space, grid_step);
  if (count > 1e8) {
    throw GridTooLargeError("grid has " + std::to_string(count) +
                            " points, limit is 1e8");
  }
  std::vector<std::vector<std::vector<int>>> per_context;
  for (int x = 0; x < space->num_contexts(); ++x) {
    std::vector<std::vector<int>> comps;
    std::vector<int> cur;
    Compositions(divisions, space->num_outcomes(x), cur, comps);
    per_context.push_back(std::move(comps));
  }
  const int c = space->num_contexts();
  std::vector<size_t> odometer(c, 0);
  std::vector<double> probs(space->size());
  std::vector<double> best_probs;
  double best = std::numeric_limits<double>::infinity();
  bool have_best = false;
  while (true) {
    for (int x = 0; x < c; ++x) {
      const auto& comp = per_context[x][odometer[x]];
      for (size_t y = 0; y < comp.size(); ++y) {
        probs[space->offset(x) + y] =
            static_cast<double>(comp[y]) / divisions;
      }
    }
    const double v = loss(TabularPolicy::FromProbs(space, probs));
    if (!std::isnan(v) && (!have_best || v < best)) {
      best = v;
      best_probs = probs;
      have_best = true;
    }
    int x = c - 1;
    while (x >= 0 && ++odometer[x] == per_context[x].size()) {
      odometer[x] = 0;
      --x;
    }
    if (x < 0) break;
  }
  if (!have_best) throw PreconditionError("loss is NaN on every grid point");
  return TabularPolicy::FromProbs(space, best_probs);
}

std::pair<TabularPolicy, int> PessimisticSetSolution(
    const RewardEnsemble& s, const ReferencePolicy& ref,
    const PromptDistribution& mu, double beta) {
  int best = 0;
  double best_kl = std::numeric_limits<double>::infinity();
  for (int i = 0; i < s.size(); ++i) {
    const TabularPolicy pi = RlhfOptimalPolicy(ref, s.member(i), beta);
    const double kl = KlDivergence(pi, ref, mu, KlDirection::kForward);
    // Constant shifts of a member reproduce its policy only up to rounding.
    if (i == 0 || kl < best_kl - 1e-12 * std::max(1.0, std::abs(best_kl))) {
      best_kl = kl;
      best = i;
    }
  }
  return {RlhfOptimalPolicy(ref, s.member(best), beta), best};
}

DegeneracyReport DpoDegeneracyCertificate(const TabularPolicy& policy,
                                          const PreferenceDataset& d,
                                          double eps) {
  const OutcomeSpace& space = *policy.space();
  d.Validate(space);
  std::vector<char> used(space.size(), 0);
  for (const auto& p : d.pairs()) {
    for (int y : {p.y_w, p.y_l}) {
      const int i = space.Index(p.x, y);
      if (used[i]) {
        throw PreconditionError("dataset is not disjoint: outcome " +
                                space.outcome_id(p.x, y) + " of context " +
                                space.context_id(p.x) + " repeats");
      }
      used[i] = 1;
    }
  }
  DegeneracyReport rep;
  rep.eps = eps;
  rep.min_winner_prob = std::numeric_limits<double>::infinity();
  for (const auto& p : d.pairs()) {
    rep.mass_on_losers += policy.prob(p.x, p.y_l);
    rep.min_winner_prob = std::min(rep.min_winner_prob, policy.prob(p.x, p.y_w));
  }
  for (int i = 0; i < space.size(); ++i) {
    if (!used[i]) rep.mass_on_unseen += std::exp(policy.log_probs()[i]);
  }
  rep.passed = rep.mass_on_losers < eps && rep.min_winner_prob > 0.0;
  return rep;
}

}  // namespace prefopt
