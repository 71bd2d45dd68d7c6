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

// Preference objectives with analytic gradients in logit space.
//
// Every margin in these losses is a difference of log-probabilities within
// one context, so the log-partition terms cancel and d/dlogit of a margin is
// +1 on the first outcome and -1 on the second.

#ifndef PREFOPT_LOSSES_H_
#define PREFOPT_LOSSES_H_

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "prefopt/core.h"

namespace prefopt {

struct PreferencePair {
  int x = 0;
  int y_w = 0;
  int y_l = 0;
};

class PreferenceDataset {
 public:
  // Empty `weights` means uniform; otherwise nonnegative, summing to 1.
  explicit PreferenceDataset(std::vector<PreferencePair> pairs,
                             std::vector<double> weights = {});

  int size() const { return static_cast<int>(pairs_.size()); }
  const PreferencePair& pair(int i) const { return pairs_[i]; }
  const std::vector<PreferencePair>& pairs() const { return pairs_; }
  double weight(int i) const { return weights_[i]; }
  const std::vector<double>& weights() const { return weights_; }

  // Throws LookupError for unknown indices, ParameterError when y_w == y_l.
  void Validate(const OutcomeSpace& space) const;

 private:
  std::vector<PreferencePair> pairs_;
  std::vector<double> weights_;
};

struct Triple {
  int x = 0;
  int y1 = 0;
  int y2 = 0;
};

class TripleDataset {
 public:
  TripleDataset(std::vector<Triple> triples, std::vector<double> weights = {});

  // Every unordered pair y1 < y2 in every context with mu(x) > 0, weighted
  // mu(x) / (#pairs in x).
  static TripleDataset FullSupport(const OutcomeSpace& space,
                                   const PromptDistribution& mu);
  // (x, y_w, y_l) triples with the dataset's weights.
  static TripleDataset FromPairs(const PreferenceDataset& d);

  int size() const { return static_cast<int>(triples_.size()); }
  const Triple& triple(int i) const { return triples_[i]; }
  const std::vector<Triple>& triples() const { return triples_; }
  double weight(int i) const { return weights_[i]; }
  const std::vector<double>& weights() const { return weights_; }

  void Validate(const OutcomeSpace& space) const;

 private:
  std::vector<Triple> triples_;
  std::vector<double> weights_;
};

struct LossValueAndGrad {
  double value = 0.0;
  std::vector<double> grad;  // one entry per logit
  std::optional<int> selected_member;
  // The dpo/ipo/distill part of `value`, without the KL penalty.
  double data_term = 0.0;
};

enum class KlMode { kExact, kEmpirical };

// Weighted mean of -log sigma(beta m) with m the log-ratio margin.
LossValueAndGrad DpoLoss(const TabularPolicy& policy, const ReferencePolicy& ref,
                         const PreferenceDataset& d, double beta);

// Weighted mean of (log(psi_w / psi_l) - tau_inv)^2, psi = pi / ref.
LossValueAndGrad IpoLoss(const TabularPolicy& policy, const ReferencePolicy& ref,
                         const PreferenceDataset& d, double tau_inv);

// Weighted mean of (r(y1) - r(y2) - beta log-ratio margin)^2.
LossValueAndGrad DistillLoss(const RewardTable& r_tgt,
                             const TabularPolicy& policy,
                             const ReferencePolicy& ref, const TripleDataset& t,
                             double beta);

// min over members of the distillation loss on `batch` (all triples when
// empty; batch weights renormalized) plus gamma E_mu KL(ref || pi).
LossValueAndGrad PdistillLoss(const RewardEnsemble& s,
                              const TabularPolicy& policy,
                              const ReferencePolicy& ref,
                              const TripleDataset& t,
                              const PromptDistribution& mu, double beta,
                              double gamma, std::span<const int> batch = {});

// DPO plus gamma times either E_mu KL(ref || pi) or the weighted mean of
// -log pi(y_w) - log pi(y_l) over the dataset.
LossValueAndGrad PdpoLoss(const TabularPolicy& policy, const ReferencePolicy& ref,
                          const PreferenceDataset& d,
                          const PromptDistribution& mu, double beta,
                          double gamma, KlMode kl_mode);

// E_mu KL(ref || pi) and its logit gradient scaled by `scale`, accumulated
// into `grad` when non-null.
double ForwardKlWithGrad(const TabularPolicy& policy, const ReferencePolicy& ref,
                         const PromptDistribution& mu, double scale,
                         std::vector<double>* grad);

// Weighted mean of -log pi(y_w) - log pi(y_l), gradient as above.
double EmpiricalKlWithGrad(const TabularPolicy& policy,
                           const PreferenceDataset& d, double scale,
                           std::vector<double>* grad);

using PolicyLossFn = std::function<double(const TabularPolicy&)>;

// Central differences over every logit; epsilon in [1e-8, 1e-3].
std::vector<double> FiniteDiffGrad(const PolicyLossFn& loss_fn,
                                   const TabularPolicy& policy, double epsilon);

// ||a - b||_inf / max(||a||_inf, ||b||_inf, 1e-8).
double RelativeGradError(std::span<const double> analytic,
                         std::span<const double> numeric);

}  // namespace prefopt

#endif  // PREFOPT_LOSSES_H_
