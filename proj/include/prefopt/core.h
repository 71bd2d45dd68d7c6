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

// Finite outcome spaces, tabular and reference policies, reward tables, and
// the closed-form alignment quantities built on them.

#ifndef PREFOPT_CORE_H_
#define PREFOPT_CORE_H_

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace prefopt {

// Contexts, with at least two outcomes each. Per-(context, outcome) tables
// are stored flat; offset(x) is the start of context x.
class OutcomeSpace {
 public:
  // `lengths` is either empty or shaped like `outcomes`.
  OutcomeSpace(std::vector<std::string> contexts,
               std::vector<std::vector<std::string>> outcomes,
               std::vector<std::vector<int>> lengths = {});

  // Contexts named x0.., outcomes named y0.. within each context.
  static std::shared_ptr<const OutcomeSpace> Make(int num_contexts,
                                                  int num_outcomes);
  static std::shared_ptr<const OutcomeSpace> Make(
      const std::vector<int>& outcomes_per_context);
  static std::shared_ptr<const OutcomeSpace> MakeWithLengths(
      const std::vector<std::vector<int>>& lengths);

  int num_contexts() const { return static_cast<int>(contexts_.size()); }
  int num_outcomes(int x) const;
  int max_outcomes() const { return max_outcomes_; }
  int offset(int x) const;
  int size() const { return offsets_.back(); }

  // Flat index of (x, y); throws LookupError when out of range.
  int Index(int x, int y) const;
  void CheckContext(int x) const;

  int FindContext(std::string_view id) const;
  int FindOutcome(int x, std::string_view id) const;
  const std::string& context_id(int x) const;
  const std::string& outcome_id(int x, int y) const;

  bool has_lengths() const { return !lengths_.empty(); }
  // Throws PreconditionError when lengths are not set.
  int length(int x, int y) const;

  bool SameShape(const OutcomeSpace& other) const;

 private:
  std::vector<std::string> contexts_;
  std::vector<std::vector<std::string>> outcomes_;
  std::vector<int> lengths_;  // flat, empty when unset
  std::vector<int> offsets_;
  int max_outcomes_ = 0;
};

using SpacePtr = std::shared_ptr<const OutcomeSpace>;

// Throws ParameterError unless the two spaces have the same shape.
void CheckSameSpace(const OutcomeSpace& a, const OutcomeSpace& b);

// Per-context log-probabilities over a space.
class ConditionalDistribution {
 public:
  const SpacePtr& space() const { return space_; }
  double log_prob(int x, int y) const {
    return log_probs_[space_->Index(x, y)];
  }
  double prob(int x, int y) const;
  const std::vector<double>& log_probs() const { return log_probs_; }
  std::vector<double> probs() const;
  std::span<const double> row(int x) const;

 protected:
  ConditionalDistribution(SpacePtr space, std::vector<double> log_probs)
      : space_(std::move(space)), log_probs_(std::move(log_probs)) {}

  SpacePtr space_;
  std::vector<double> log_probs_;
};

// Softmax policy over a logit table. Logits may be -inf (zero probability)
// but not NaN or +inf, and every context needs one finite logit.
class TabularPolicy : public ConditionalDistribution {
 public:
  TabularPolicy(SpacePtr space, std::vector<double> logits);

  static TabularPolicy Uniform(SpacePtr space);
  // Logits are log(probs); zero entries become -inf.
  static TabularPolicy FromProbs(SpacePtr space,
                                 const std::vector<double>& probs);

  const std::vector<double>& logits() const { return logits_; }
  double logit(int x, int y) const { return logits_[space_->Index(x, y)]; }

 private:
  std::vector<double> logits_;
};

// Full-support reference policy.
class ReferencePolicy : public ConditionalDistribution {
 public:
  // Probabilities must be > 0 and sum to 1 per context within 1e-9.
  static ReferencePolicy FromProbs(SpacePtr space,
                                   const std::vector<double>& probs);
  // Finite logits, normalized by softmax.
  static ReferencePolicy FromLogits(SpacePtr space,
                                    const std::vector<double>& logits);
  static ReferencePolicy Uniform(SpacePtr space);

  TabularPolicy AsPolicy() const { return TabularPolicy(space_, log_probs_); }

 private:
  ReferencePolicy(SpacePtr space, std::vector<double> log_probs)
      : ConditionalDistribution(std::move(space), std::move(log_probs)) {}
};

class PromptDistribution {
 public:
  // Nonnegative weights summing to 1 within 1e-12.
  explicit PromptDistribution(std::vector<double> weights);
  static PromptDistribution Uniform(int num_contexts);

  int num_contexts() const { return static_cast<int>(weights_.size()); }
  double weight(int x) const { return weights_.at(x); }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weights_;
};

class RewardTable {
 public:
  // All values must be finite.
  RewardTable(SpacePtr space, std::vector<double> values);
  static RewardTable Zeros(SpacePtr space);

  const SpacePtr& space() const { return space_; }
  double value(int x, int y) const { return values_[space_->Index(x, y)]; }
  const std::vector<double>& values() const { return values_; }

 private:
  SpacePtr space_;
  std::vector<double> values_;
};

class RewardEnsemble {
 public:
  explicit RewardEnsemble(std::vector<RewardTable> members);

  int size() const { return static_cast<int>(members_.size()); }
  const RewardTable& member(int i) const { return members_.at(i); }
  const std::vector<RewardTable>& members() const { return members_; }
  const SpacePtr& space() const { return members_.front().space(); }

 private:
  std::vector<RewardTable> members_;
};

struct Hyperparams {
  double beta = 1.0;
  double tau_inv = 1.0;
  double alpha = 2.0;
  double gamma = 0.0;
  double lr = 0.1;
  long steps = 1;

  // Throws ParameterError on beta <= 0, steps < 1, lr <= 0, gamma < 0,
  // alpha <= 0 or a non-finite tau_inv.
  void Validate() const;
};

enum class KlDirection {
  kForward,  // KL(q || p): reference first when p is the policy
  kReverse,  // KL(p || q)
};

// Numerics.
double LogSumExp(std::span<const double> v);
double Sigmoid(double z);
double LogSigmoid(double z);
// log(1 + exp(z)).
double Softplus(double z);

double LogProb(const TabularPolicy& policy, int x, int y);

// E_mu KL in the given direction; throws DivergenceUndefinedError on a
// support violation.
double KlDivergence(const ConditionalDistribution& p,
                    const ConditionalDistribution& q,
                    const PromptDistribution& mu, KlDirection direction);

// beta * [log pi(y1|x) - log ref(y1|x) - log pi(y2|x) + log ref(y2|x)].
double ImplicitRewardDiff(const TabularPolicy& policy,
                          const ReferencePolicy& ref, double beta, int x,
                          int y1, int y2);

// sigma(r(x,y1) - r(x,y2)).
double BradleyTerryProb(const RewardTable& r, int x, int y1, int y2);

// pi*(y|x) proportional to ref(y|x) exp(r(x,y) / beta).
TabularPolicy RlhfOptimalPolicy(const ReferencePolicy& ref,
                                const RewardTable& r, double beta);

// E_mu E_p r.
double ExpectedReward(const ConditionalDistribution& p, const RewardTable& r,
                      const PromptDistribution& mu);

// E_mu [E_pi r - beta KL(pi || ref)].
double AlignmentObjective(const TabularPolicy& policy, const RewardTable& r,
                          const ReferencePolicy& ref,
                          const PromptDistribution& mu, double beta);

// min_i E_mu [E_pi r_i - E_ref r_i] - beta E_mu KL(pi || ref).
double PessimisticObjective(const TabularPolicy& policy,
                            const RewardEnsemble& s,
                            const ReferencePolicy& ref,
                            const PromptDistribution& mu, double beta);

}  // namespace prefopt

#endif  // PREFOPT_CORE_H_
