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

// Closed-form and brute-force reference solutions.

#ifndef PREFOPT_ORACLES_H_
#define PREFOPT_ORACLES_H_

#include <functional>
#include <utility>
#include <vector>

#include "prefopt/core.h"
#include "prefopt/losses.h"

namespace prefopt {

enum class ChainKind { kChain, kClosure };

// Preferences over n arms of a single context, y_1 < y_2 < ... < y_n.
// Chain holds (i, i+1); closure holds every (i, j) with i < j. Arm j is the
// preferred outcome of each pair.
struct ChainPreferences {
  int n = 3;
  ChainKind kind = ChainKind::kChain;

  PreferenceDataset Dataset() const;
};

// Log-policy arm weights up to a shared constant, zero-mean gauge.
struct PsiSolution {
  std::vector<double> psi;
  double psi_inf = 0.0;  // max - min
};

// Minimizing pi(y_l) of the empirical-KL pessimistic DPO objective at fixed
// pi(y_w): min(1 - pi_w, exp(-log(alpha - 1) / beta + log pi_w +
// log(ref_l / ref_w))).
double PdpoClosedForm(double pi_w, double ref_w, double ref_l, double alpha,
                      double beta);

// Minimizing pi(y_l) of the distillation objective at fixed pi(y_w), where
// r_diff_lw = r(y_l) - r(y_w); clipped at 1 - pi_w.
double DdpoClosedForm(double pi_w, double ref_w, double ref_l,
                      double r_diff_lw, double beta);

// Analytic IPO optimum: spacing tau_inv (chain) or 2 tau_inv / n (closure).
PsiSolution IpoChainSolution(int n, double tau_inv, ChainKind kind);

// Exact IPO minimizer over psi by the normal equations of
// sum_i w_i (psi_w - psi_l - log(ref_w / ref_l) - tau_inv)^2. Each connected
// component of the preference graph gets a zero-mean gauge.
PsiSolution IpoQuadraticSolve(const PreferenceDataset& prefs,
                              const ReferencePolicy& ref, double tau_inv);

using GridLossFn = std::function<double(const TabularPolicy&)>;

// Exhaustive argmin over the product of per-context simplex grids with
// spacing grid_step. NaN losses are skipped; ties go to the
// lexicographically first point. Throws GridTooLargeError past 1e8 points.
TabularPolicy GridBruteForce(const GridLossFn& loss, const SpacePtr& space,
                             double grid_step);

// Number of points GridBruteForce would visit.
double GridPointCount(const OutcomeSpace& space, double grid_step);

// The member of {pi_i proportional to ref exp(r_i / beta)} with the smallest
// E_mu KL(ref || pi_i); ties go to the lowest index.
std::pair<TabularPolicy, int> PessimisticSetSolution(
    const RewardEnsemble& s, const ReferencePolicy& ref,
    const PromptDistribution& mu, double beta);

struct DegeneracyReport {
  double mass_on_losers = 0.0;   // E_mu-free total mass on {y_l}
  double min_winner_prob = 0.0;  // min_i pi(y_w,i)
  double mass_on_unseen = 0.0;   // total mass on outcomes absent from D
  double eps = 1e-3;
  bool passed = false;  // mass_on_losers < eps and min_winner_prob > 0
};

// Checks the degenerate-minimizer signature on disjoint-pair data. Throws
// PreconditionError naming a repeated outcome.
DegeneracyReport DpoDegeneracyCertificate(const TabularPolicy& policy,
                                          const PreferenceDataset& d,
                                          double eps = 1e-3);

}  // namespace prefopt

#endif  // PREFOPT_ORACLES_H_
