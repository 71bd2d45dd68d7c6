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

#include "prefopt/losses.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "prefopt/errors.h"

namespace prefopt {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> CheckedWeights(std::vector<double> weights, size_t n,
                                   const char* what) {
  if (n == 0) throw ParameterError(std::string("empty ") + what);
  if (weights.empty()) return std::vector<double>(n, 1.0 / n);
  if (weights.size() != n) {
    throw ParameterError(std::string(what) + " weights have the wrong size");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ParameterError(std::string(what) + " weights must be nonnegative");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ParameterError(std::string(what) + " weights do not sum to 1");
  }
  return weights;
}

void CheckBeta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ParameterError("beta must be positive");
  }
}

void CheckGamma(double gamma) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw ParameterError("gamma must be nonnegative");
  }
}

// log(pi(a)/ref(a)) - log(pi(b)/ref(b)) in context x.
double LogRatioMargin(const TabularPolicy& policy, const ReferencePolicy& ref,
                      int ia, int ib) {
  const auto& lp = policy.log_probs();
  const auto& lr = ref.log_probs();
  return (lp[ia] - lr[ia]) - (lp[ib] - lr[ib]);
}

void CheckShapes(const TabularPolicy& policy, const ReferencePolicy& ref) {
  CheckSameSpace(*policy.space(), *ref.space());
}

// Distillation loss of one member over the given triple indices and weights;
// adds d/dlogit times `grad_scale` when grad is non-null.
double DistillOnIndices(const RewardTable& r, const TabularPolicy& policy,
                        const ReferencePolicy& ref, const TripleDataset& t,
                        std::span<const int> idx,
                        std::span<const double> weights, double beta,
                        std::vector<double>* grad) {
  const OutcomeSpace& space = *policy.space();
  const auto& rv = r.values();
  double value = 0.0;
  for (size_t k = 0; k < idx.size(); ++k) {
    const Triple& tr = t.triple(idx[k]);
    const int i1 = space.Index(tr.x, tr.y1);
    const int i2 = space.Index(tr.x, tr.y2);
    const double e =
        (rv[i1] - rv[i2]) - beta * LogRatioMargin(policy, ref, i1, i2);
    value += weights[k] * e * e;
    if (grad != nullptr) {
      const double c = -2.0 * beta * weights[k] * e;
      (*grad)[i1] += c;
      (*grad)[i2] -= c;
    }
  }
  return value;
}

}  // namespace

PreferenceDataset::PreferenceDataset(std::vector<PreferencePair> pairs,
                                     std::vector<double> weights)
    : pairs_(std::move(pairs)),
      weights_(CheckedWeights(std::move(weights), pairs_.size(),
                              "preference dataset")) {}

void PreferenceDataset::Validate(const OutcomeSpace& space) const {
  for (const auto& p : pairs_) {
    space.Index(p.x, p.y_w);
    space.Index(p.x, p.y_l);
    if (p.y_w == p.y_l) {
      throw ParameterError("preference pair with identical outcomes");
    }
  }
}

TripleDataset::TripleDataset(std::vector<Triple> triples,
                             std::vector<double> weights)
    : triples_(std::move(triples)),
      weights_(CheckedWeights(std::move(weights), triples_.size(),
                              "triple dataset")) {}

TripleDataset TripleDataset::FullSupport(const OutcomeSpace& space,
                                         const PromptDistribution& mu) {
  std::vector<Triple> triples;
  std::vector<double> weights;
  for (int x = 0; x < space.num_contexts(); ++x) {
    if (mu.weight(x) == 0.0) continue;
    const int k = space.num_outcomes(x);
    const double w = mu.weight(x) / (k * (k - 1) / 2);
    for (int a = 0; a < k; ++a) {
      for (int b = a + 1; b < k; ++b) {
        triples.push_back({x, a, b});
        weights.push_back(w);
      }
    }
  }
  return TripleDataset(std::move(triples), std::move(weights));
}

TripleDataset TripleDataset::FromPairs(const PreferenceDataset& d) {
  std::vector<Triple> triples;
  triples.reserve(d.size());
  for (const auto& p : d.pairs()) triples.push_back({p.x, p.y_w, p.y_l});
  return TripleDataset(std::move(triples), d.weights());
}

void TripleDataset::Validate(const OutcomeSpace& space) const {
  for (const auto& t : triples_) {
    space.Index(t.x, t.y1);
    space.Index(t.x, t.y2);
  }
}

LossValueAndGrad DpoLoss(const TabularPolicy& policy, const ReferencePolicy& ref,
                         const PreferenceDataset& d, double beta) {
  CheckBeta(beta);
  CheckShapes(policy, ref);
  const OutcomeSpace& space = *policy.space();
  LossValueAndGrad out;
  out.grad.assign(space.size(), 0.0);
  for (int i = 0; i < d.size(); ++i) {
    const PreferencePair& p = d.pair(i);
    if (p.y_w == p.y_l) throw ParameterError("pair with identical outcomes");
    const int iw = space.Index(p.x, p.y_w);
    const int il = space.Index(p.x, p.y_l);
    const double m = LogRatioMargin(policy, ref, iw, il);
    out.value += d.weight(i) * Softplus(-beta * m);
    const double c = -beta * d.weight(i) * Sigmoid(-beta * m);
    out.grad[iw] += c;
    out.grad[il] -= c;
  }
  out.data_term = out.value;
  return out;
}

LossValueAndGrad IpoLoss(const TabularPolicy& policy, const ReferencePolicy& ref,
                         const PreferenceDataset& d, double tau_inv) {
  if (!std::isfinite(tau_inv)) throw ParameterError("tau_inv must be finite");
  CheckShapes(policy, ref);
  const OutcomeSpace& space = *policy.space();
  LossValueAndGrad out;
  out.grad.assign(space.size(), 0.0);
  for (int i = 0; i < d.size(); ++i) {
    const PreferencePair& p = d.pair(i);
    if (p.y_w == p.y_l) throw ParameterError("pair with identical outcomes");
    const int iw = space.Index(p.x, p.y_w);
    const int il = space.Index(p.x, p.y_l);
    const double e = LogRatioMargin(policy, ref, iw, il) - tau_inv;
    out.value += d.weight(i) * e * e;
    const double c = 2.0 * d.weight(i) * e;
    out.grad[iw] += c;
    out.grad[il] -= c;
  }
  out.data_term = out.value;
  return out;
}

LossValueAndGrad DistillLoss(const RewardTable& r_tgt,
                             const TabularPolicy& policy,
                             const ReferencePolicy& ref, const TripleDataset& t,
                             double beta) {
  CheckBeta(beta);
  CheckShapes(policy, ref);
  CheckSameSpace(*policy.space(), *r_tgt.space());
  std::vector<int> idx(t.size());
  for (int i = 0; i < t.size(); ++i) idx[i] = i;
  LossValueAndGrad out;
  out.grad.assign(policy.space()->size(), 0.0);
  out.value = DistillOnIndices(r_tgt, policy, ref, t, idx, t.weights(), beta,
                               &out.grad);
  out.data_term = out.value;
  return out;
}

LossValueAndGrad PdistillLoss(const RewardEnsemble& s,
                              const TabularPolicy& policy,
                              const ReferencePolicy& ref,
                              const TripleDataset& t,
                              const PromptDistribution& mu, double beta,
                              double gamma, std::span<const int> batch) {
  CheckBeta(beta);
  CheckGamma(gamma);
  CheckShapes(policy, ref);
  CheckSameSpace(*policy.space(), *s.space());

  std::vector<int> idx;
  std::vector<double> weights;
  if (batch.empty()) {
    idx.resize(t.size());
    for (int i = 0; i < t.size(); ++i) idx[i] = i;
    weights = t.weights();
  } else {
    double total = 0.0;
    for (int i : batch) {
      if (i < 0 || i >= t.size()) throw LookupError("batch index out of range");
      idx.push_back(i);
      total += t.weight(i);
    }
    if (!(total > 0.0)) throw ParameterError("batch has zero total weight");
    for (int i : idx) weights.push_back(t.weight(i) / total);
  }

  int best = 0;
  double best_value = kInf;
  for (int k = 0; k < s.size(); ++k) {
    const double v = DistillOnIndices(s.member(k), policy, ref, t, idx,
                                      weights, beta, nullptr);
    if (v < best_value) {
      best_value = v;
      best = k;
    }
  }
  LossValueAndGrad out;
  out.grad.assign(policy.space()->size(), 0.0);
  out.value = DistillOnIndices(s.member(best), policy, ref, t, idx, weights,
                               beta, &out.grad);
  out.selected_member = best;
  out.data_term = out.value;
  if (gamma > 0.0) {
    out.value += gamma * ForwardKlWithGrad(policy, ref, mu, gamma, &out.grad);
  }
  return out;
}

LossValueAndGrad PdpoLoss(const TabularPolicy& policy, const ReferencePolicy& ref,
                          const PreferenceDataset& d,
                          const PromptDistribution& mu, double beta,
                          double gamma, KlMode kl_mode) {
  CheckGamma(gamma);
  LossValueAndGrad out = DpoLoss(policy, ref, d, beta);
  if (gamma == 0.0) return out;
  if (kl_mode == KlMode::kExact) {
    out.value += gamma * ForwardKlWithGrad(policy, ref, mu, gamma, &out.grad);
  } else {
    out.value += gamma * EmpiricalKlWithGrad(policy, d, gamma, &out.grad);
  }
  return out;
}

double ForwardKlWithGrad(const TabularPolicy& policy, const ReferencePolicy& ref,
                         const PromptDistribution& mu, double scale,
                         std::vector<double>* grad) {
  CheckShapes(policy, ref);
  const OutcomeSpace& space = *policy.space();
  if (mu.num_contexts() != space.num_contexts()) {
    throw ParameterError("prompt distribution does not match contexts");
  }
  const auto& lp = policy.log_probs();
  const auto& lr = ref.log_probs();
  double total = 0.0;
  for (int x = 0; x < space.num_contexts(); ++x) {
    const double w = mu.weight(x);
    if (w == 0.0) continue;
    const int off = space.offset(x);
    double kl = 0.0;
    for (int y = 0; y < space.num_outcomes(x); ++y) {
      const int i = off + y;
      const double r = std::exp(lr[i]);
      kl += r * (lr[i] - lp[i]);
      if (grad != nullptr) (*grad)[i] += scale * w * (std::exp(lp[i]) - r);
    }
    total += w * kl;
  }
  return total;
}

double EmpiricalKlWithGrad(const TabularPolicy& policy,
                           const PreferenceDataset& d, double scale,
                           std::vector<double>* grad) {
  const OutcomeSpace& space = *policy.space();
  const auto& lp = policy.log_probs();
  double total = 0.0;
  // Per-context sum of pair weights: each pair contributes 2 w pi_j.
  std::vector<double> ctx_weight(space.num_contexts(), 0.0);
  for (int i = 0; i < d.size(); ++i) {
    const PreferencePair& p = d.pair(i);
    const int iw = space.Index(p.x, p.y_w);
    const int il = space.Index(p.x, p.y_l);
    total += d.weight(i) * (-lp[iw] - lp[il]);
    if (grad != nullptr) {
      (*grad)[iw] -= scale * d.weight(i);
      (*grad)[il] -= scale * d.weight(i);
      ctx_weight[p.x] += d.weight(i);
    }
  }
  if (grad != nullptr) {
    for (int x = 0; x < space.num_contexts(); ++x) {
      if (ctx_weight[x] == 0.0) continue;
      const int off = space.offset(x);
      for (int y = 0; y < space.num_outcomes(x); ++y) {
        (*grad)[off + y] += scale * 2.0 * ctx_weight[x] * std::exp(lp[off + y]);
      }
    }
  }
  return total;
}

std::vector<double> FiniteDiffGrad(const PolicyLossFn& loss_fn,
                                   const TabularPolicy& policy,
                                   double epsilon) {
  if (!(epsilon >= 1e-8 && epsilon <= 1e-3)) {
    throw ParameterError("finite-difference epsilon must be in [1e-8, 1e-3]");
  }
  std::vector<double> logits = policy.logits();
  std::vector<double> grad(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    const double saved = logits[i];
    logits[i] = saved + epsilon;
    const double up = loss_fn(TabularPolicy(policy.space(), logits));
    logits[i] = saved - epsilon;
    const double down = loss_fn(TabularPolicy(policy.space(), logits));
    logits[i] = saved;
    grad[i] = (up - down) / (2.0 * epsilon);
  }
  return grad;
}

double RelativeGradError(std::span<const double> analytic,
                         std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) {
    throw ParameterError("gradient sizes differ");
  }
  double diff = 0.0, scale = 1e-8;
  for (size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return diff / scale;
}

}  // namespace prefopt
