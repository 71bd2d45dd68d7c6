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

#include "prefopt/core.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <utility>

#include "prefopt/errors.h"

namespace prefopt {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <typename T>
void CheckUnique(const std::vector<T>& ids, const std::string& what) {
  std::set<T> seen(ids.begin(), ids.end());
  if (seen.size() != ids.size()) {
    throw ParameterError("duplicate " + what + " identifier");
  }
}

// Log-softmax of one context row into `out`.
void LogSoftmaxRow(std::span<const double> logits, double* out) {
  const double lse = LogSumExp(logits);
  for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

}  // namespace

OutcomeSpace::OutcomeSpace(std::vector<std::string> contexts,
                           std::vector<std::vector<std::string>> outcomes,
                           std::vector<std::vector<int>> lengths)
    : contexts_(std::move(contexts)), outcomes_(std::move(outcomes)) {
  if (contexts_.empty()) throw ParameterError("outcome space has no contexts");
  if (outcomes_.size() != contexts_.size()) {
    throw ParameterError("outcome lists do not match contexts");
  }
  CheckUnique(contexts_, "context");
  offsets_.push_back(0);
  for (const auto& ys : outcomes_) {
    if (ys.size() < 2) throw ParameterError("context with fewer than 2 outcomes");
    CheckUnique(ys, "outcome");
    offsets_.push_back(offsets_.back() + static_cast<int>(ys.size()));
    max_outcomes_ = std::max(max_outcomes_, static_cast<int>(ys.size()));
  }
  if (!lengths.empty()) {
    if (lengths.size() != outcomes_.size()) {
      throw ParameterError("length table does not match contexts");
    }
    for (size_t x = 0; x < lengths.size(); ++x) {
      if (lengths[x].size() != outcomes_[x].size()) {
        throw ParameterError("length table does not match outcomes");
      }
      for (int len : lengths[x]) {
        if (len < 0) throw ParameterError("negative outcome length");
        lengths_.push_back(len);
      }
    }
  }
}

std::shared_ptr<const OutcomeSpace> OutcomeSpace::Make(int num_contexts,
                                                       int num_outcomes) {
  return Make(std::vector<int>(std::max(num_contexts, 0), num_outcomes));
}

std::shared_ptr<const OutcomeSpace> OutcomeSpace::Make(
    const std::vector<int>& outcomes_per_context) {
  std::vector<std::string> contexts;
  std::vector<std::vector<std::string>> outcomes;
  for (size_t x = 0; x < outcomes_per_context.size(); ++x) {
    contexts.push_back("x" + std::to_string(x));
    std::vector<std::string> ys;
    for (int y = 0; y < outcomes_per_context[x]; ++y) {
      ys.push_back("y" + std::to_string(y));
    }
    outcomes.push_back(std::move(ys));
  }
  return std::make_shared<const OutcomeSpace>(std::move(contexts),
                                              std::move(outcomes));
}

std::shared_ptr<const OutcomeSpace> OutcomeSpace::MakeWithLengths(
    const std::vector<std::vector<int>>& lengths) {
  std::vector<std::string> contexts;
  std::vector<std::vector<std::string>> outcomes;
  for (size_t x = 0; x < lengths.size(); ++x) {
    contexts.push_back("x" + std::to_string(x));
    std::vector<std::string> ys;
    for (size_t y = 0; y < lengths[x].size(); ++y) {
      ys.push_back("y" + std::to_string(y));
    }
    outcomes.push_back(std::move(ys));
  }
  return std::make_shared<const OutcomeSpace>(std::move(contexts),
                                              std::move(outcomes), lengths);
}

int OutcomeSpace::num_outcomes(int x) const {
  CheckContext(x);
  return offsets_[x + 1] - offsets_[x];
}

int OutcomeSpace::offset(int x) const {
  CheckContext(x);
  return offsets_[x];
}

void OutcomeSpace::CheckContext(int x) const {
  if (x < 0 || x >= num_contexts()) {
    throw LookupError("unknown context index " + std::to_string(x));
  }
}

int OutcomeSpace::Index(int x, int y) const {
  CheckContext(x);
  if (y < 0 || y >= offsets_[x + 1] - offsets_[x]) {
    throw LookupError("unknown outcome index " + std::to_string(y) +
                      " in context " + contexts_[x]);
  }
  return offsets_[x] + y;
}

int OutcomeSpace::FindContext(std::string_view id) const {
  for (int x = 0; x < num_contexts(); ++x) {
    if (contexts_[x] == id) return x;
  }
  throw LookupError("unknown context '" + std::string(id) + "'");
}

int OutcomeSpace::FindOutcome(int x, std::string_view id) const {
  CheckContext(x);
  const auto& ys = outcomes_[x];
  for (size_t y = 0; y < ys.size(); ++y) {
    if (ys[y] == id) return static_cast<int>(y);
  }
  throw LookupError("unknown outcome '" + std::string(id) + "' in context " +
                    contexts_[x]);
}

const std::string& OutcomeSpace::context_id(int x) const {
  CheckContext(x);
  return contexts_[x];
}

const std::string& OutcomeSpace::outcome_id(int x, int y) const {
  Index(x, y);
  return outcomes_[x][y];
}

int OutcomeSpace::length(int x, int y) const {
  const int i = Index(x, y);
  if (lengths_.empty()) throw PreconditionError("outcome lengths are not set");
  return lengths_[i];
}

bool OutcomeSpace::SameShape(const OutcomeSpace& other) const {
  return this == &other || offsets_ == other.offsets_;
}

void CheckSameSpace(const OutcomeSpace& a, const OutcomeSpace& b) {
  if (!a.SameShape(b)) throw ParameterError("outcome spaces differ");
}

double ConditionalDistribution::prob(int x, int y) const {
  return std::exp(log_prob(x, y));
}

std::vector<double> ConditionalDistribution::probs() const {
  std::vector<double> out(log_probs_.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_probs_[i]);
  return out;
}

std::span<const double> ConditionalDistribution::row(int x) const {
  return std::span<const double>(log_probs_).subspan(
      space_->offset(x), space_->num_outcomes(x));
}

TabularPolicy::TabularPolicy(SpacePtr space, std::vector<double> logits)
    : ConditionalDistribution(std::move(space), {}),
      logits_(std::move(logits)) {
  if (!space_) throw ParameterError("null outcome space");
  if (static_cast<int>(logits_.size()) != space_->size()) {
    throw ParameterError("logit table size does not match outcome space");
  }
  for (double v : logits_) {
    if (std::isnan(v) || v == kInf) throw ParameterError("NaN or +inf logit");
  }
  log_probs_.resize(logits_.size());
  for (int x = 0; x < space_->num_contexts(); ++x) {
    const int off = space_->offset(x);
    std::span<const double> row(logits_.data() + off, space_->num_outcomes(x));
    if (std::all_of(row.begin(), row.end(), [](double v) { return v == -kInf; })) {
      throw ParameterError("context with all logits -inf");
    }
    LogSoftmaxRow(row, log_probs_.data() + off);
  }
}

TabularPolicy TabularPolicy::Uniform(SpacePtr space) {
  const int n = space->size();
  return TabularPolicy(std::move(space), std::vector<double>(n, 0.0));
}

TabularPolicy TabularPolicy::FromProbs(SpacePtr space,
                                       const std::vector<double>& probs) {
  std::vector<double> logits(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0) || !std::isfinite(probs[i])) {
      throw ParameterError("negative or non-finite probability");
    }
    logits[i] = probs[i] > 0.0 ? std::log(probs[i]) : -kInf;
  }
  return TabularPolicy(std::move(space), std::move(logits));
}

ReferencePolicy ReferencePolicy::FromProbs(SpacePtr space,
                                           const std::vector<double>& probs) {
  if (static_cast<int>(probs.size()) != space->size()) {
    throw ParameterError("reference table size does not match outcome space");
  }
  std::vector<double> logits(probs.size());
  for (int x = 0; x < space->num_contexts(); ++x) {
    double total = 0.0;
    for (int y = 0; y < space->num_outcomes(x); ++y) {
      const double p = probs[space->Index(x, y)];
      if (!(p > 0.0) || !std::isfinite(p)) {
        throw ParameterError("reference probabilities must be strictly positive");
      }
      total += p;
      logits[space->Index(x, y)] = std::log(p);
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ParameterError("reference probabilities do not sum to 1");
    }
  }
  return FromLogits(std::move(space), logits);
}

ReferencePolicy ReferencePolicy::FromLogits(SpacePtr space,
                                            const std::vector<double>& logits) {
  for (double v : logits) {
    if (!std::isfinite(v)) throw ParameterError("non-finite reference logit");
  }
  TabularPolicy p(space, logits);
  return ReferencePolicy(std::move(space), p.log_probs());
}

ReferencePolicy ReferencePolicy::Uniform(SpacePtr space) {
  const int n = space->size();
  return FromLogits(std::move(space), std::vector<double>(n, 0.0));
}

PromptDistribution::PromptDistribution(std::vector<double> weights)
    : weights_(std::move(weights)) {
  if (weights_.empty()) throw ParameterError("empty prompt distribution");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ParameterError("prompt weights must be nonnegative");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ParameterError("prompt weights do not sum to 1");
  }
}

PromptDistribution PromptDistribution::Uniform(int num_contexts) {
  if (num_contexts < 1) throw ParameterError("need at least one context");
  return PromptDistribution(
      std::vector<double>(num_contexts, 1.0 / num_contexts));
}

RewardTable::RewardTable(SpacePtr space, std::vector<double> values)
    : space_(std::move(space)), values_(std::move(values)) {
  if (!space_) throw ParameterError("null outcome space");
  if (static_cast<int>(values_.size()) != space_->size()) {
    throw ParameterError("reward table size does not match outcome space");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw ParameterError("non-finite reward value");
  }
}

RewardTable RewardTable::Zeros(SpacePtr space) {
  const int n = space->size();
  return RewardTable(std::move(space), std::vector<double>(n, 0.0));
}

RewardEnsemble::RewardEnsemble(std::vector<RewardTable> members)
    : members_(std::move(members)) {
  if (members_.empty()) throw ParameterError("empty reward ensemble");
  for (const auto& m : members_) CheckSameSpace(*m.space(), *space());
}

void Hyperparams::Validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ParameterError("beta must be positive");
  }
  if (!std::isfinite(tau_inv)) throw ParameterError("tau_inv must be finite");
  if (!(alpha > 0.0)) throw ParameterError("alpha must be positive");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw ParameterError("gamma must be nonnegative");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw ParameterError("lr must be positive");
  }
  if (steps < 1) throw ParameterError("steps must be at least 1");
}

double LogSumExp(std::span<const double> v) {
  if (v.empty()) return -kInf;
  size_t arg = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[arg]) arg = i;
  }
  const double m = v[arg];
  if (m == -kInf || m == kInf) return m;
  double s = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i != arg) s += std::exp(v[i] - m);
  }
  return m + std::log1p(s);
}

double Sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double Softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double LogSigmoid(double z) { return -Softplus(-z); }

double LogProb(const TabularPolicy& policy, int x, int y) {
  return policy.log_prob(x, y);
}

double KlDivergence(const ConditionalDistribution& p,
                    const ConditionalDistribution& q,
                    const PromptDistribution& mu, KlDirection direction) {
  CheckSameSpace(*p.space(), *q.space());
  const OutcomeSpace& space = *p.space();
  if (mu.num_contexts() != space.num_contexts()) {
    throw ParameterError("prompt distribution does not match contexts");
  }
  const auto& a = direction == KlDirection::kReverse ? p : q;
  const auto& b = direction == KlDirection::kReverse ? q : p;
  double total = 0.0;
  for (int x = 0; x < space.num_contexts(); ++x) {
    if (mu.weight(x) == 0.0) continue;
    double kl = 0.0;
    for (int y = 0; y < space.num_outcomes(x); ++y) {
      const double la = a.log_prob(x, y);
      if (la == -kInf) continue;
      const double lb = b.log_prob(x, y);
      if (lb == -kInf) {
        throw DivergenceUndefinedError("KL undefined: support violation at (" +
                                       space.context_id(x) + ", " +
                                       space.outcome_id(x, y) + ")");
      }
      kl += std::exp(la) * (la - lb);
    }
    total += mu.weight(x) * std::max(kl, 0.0);
  }
  return total;
}

double ImplicitRewardDiff(const TabularPolicy& policy,
                          const ReferencePolicy& ref, double beta, int x,
                          int y1, int y2) {
  return beta * ((policy.log_prob(x, y1) - ref.log_prob(x, y1)) -
                 (policy.log_prob(x, y2) - ref.log_prob(x, y2)));
}

double BradleyTerryProb(const RewardTable& r, int x, int y1, int y2) {
  return Sigmoid(r.value(x, y1) - r.value(x, y2));
}

TabularPolicy RlhfOptimalPolicy(const ReferencePolicy& ref,
                                const RewardTable& r, double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ParameterError("beta must be positive");
  }
  CheckSameSpace(*ref.space(), *r.space());
  std::vector<double> logits(ref.log_probs());
  for (size_t i = 0; i < logits.size(); ++i) logits[i] += r.values()[i] / beta;
  return TabularPolicy(ref.space(), std::move(logits));
}

double ExpectedReward(const ConditionalDistribution& p, const RewardTable& r,
                      const PromptDistribution& mu) {
  CheckSameSpace(*p.space(), *r.space());
  const OutcomeSpace& space = *p.space();
  double total = 0.0;
  for (int x = 0; x < space.num_contexts(); ++x) {
    double e = 0.0;
    for (int y = 0; y < space.num_outcomes(x); ++y) {
      e += p.prob(x, y) * r.value(x, y);
    }
    total += mu.weight(x) * e;
  }
  return total;
}

double AlignmentObjective(const TabularPolicy& policy, const RewardTable& r,
                          const ReferencePolicy& ref,
                          const PromptDistribution& mu, double beta) {
  return ExpectedReward(policy, r, mu) -
         beta * KlDivergence(policy, ref, mu, KlDirection::kReverse);
}

double PessimisticObjective(const TabularPolicy& policy,
                            const RewardEnsemble& s,
                            const ReferencePolicy& ref,
                            const PromptDistribution& mu, double beta) {
  double worst = kInf;
  for (const auto& r : s.members()) {
    worst = std::min(worst, ExpectedReward(policy, r, mu) -
                                ExpectedReward(ref, r, mu));
  }
  return worst - beta * KlDivergence(policy, ref, mu, KlDirection::kReverse);
}

}  // namespace prefopt
