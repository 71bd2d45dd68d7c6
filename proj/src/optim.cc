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

#include "prefopt/optim.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <utility>

#include "prefopt/errors.h"

namespace prefopt {
namespace {

const PromptDistribution& MuOrUniform(const LossSpec& spec,
                                      std::optional<PromptDistribution>& tmp,
                                      int num_contexts) {
  if (spec.mu) return *spec.mu;
  tmp = PromptDistribution::Uniform(num_contexts);
  return *tmp;
}

template <typename T>
const T& Require(const std::shared_ptr<const T>& p, const char* what) {
  if (!p) throw ParameterError(std::string("loss spec is missing ") + what);
  return *p;
}

std::vector<PreferencePair> DefaultTracked(const LossSpec& spec) {
  std::vector<PreferencePair> out;
  if (spec.prefs) {
    out = spec.prefs->pairs();
  } else if (spec.triples) {
    for (const auto& t : spec.triples->triples()) {
      if (t.y1 != t.y2) out.push_back({t.x, t.y1, t.y2});
    }
  }
  return out;
}

bool AllFinite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(),
                     [](double a) { return std::isfinite(a); });
}

}  // namespace

LossValueAndGrad EvaluateLoss(const LossSpec& spec, const TabularPolicy& policy,
                              const Hyperparams& hp, double gamma,
                              std::span<const int> batch) {
  std::optional<PromptDistribution> tmp;
  switch (spec.kind) {
    case LossKind::kDpo:
      return DpoLoss(policy, Require(spec.ref, "ref"),
                     Require(spec.prefs, "prefs"), hp.beta);
    case LossKind::kIpo:
      return IpoLoss(policy, Require(spec.ref, "ref"),
                     Require(spec.prefs, "prefs"), hp.tau_inv);
    case LossKind::kDistill:
      return DistillLoss(Require(spec.target, "target"), policy,
                         Require(spec.ref, "ref"),
                         Require(spec.triples, "triples"), hp.beta);
    case LossKind::kPdistill:
      return PdistillLoss(
          Require(spec.ensemble, "ensemble"), policy, Require(spec.ref, "ref"),
          Require(spec.triples, "triples"),
          MuOrUniform(spec, tmp, policy.space()->num_contexts()), hp.beta,
          gamma, batch);
    case LossKind::kPdpo:
      return PdpoLoss(policy, Require(spec.ref, "ref"),
                      Require(spec.prefs, "prefs"),
                      MuOrUniform(spec, tmp, policy.space()->num_contexts()),
                      hp.beta, gamma, spec.kl_mode);
    case LossKind::kCustom:
      if (!spec.custom) throw ParameterError("custom loss is not set");
      return spec.custom(policy, gamma, batch);
  }
  throw ParameterError("unknown loss kind");
}

double AnnealGamma(long step, long total_steps,
                   const AnnealSchedule& schedule) {
  if (step < 0 || step > total_steps) {
    throw ParameterError("anneal step " + std::to_string(step) +
                         " outside [0, " + std::to_string(total_steps) + "]");
  }
  if (schedule.gamma_start < 0.0 || schedule.gamma_end < 0.0) {
    throw ParameterError("gamma endpoints must be nonnegative");
  }
  if (schedule.mode == AnnealSchedule::Mode::kConstant || total_steps == 0) {
    return schedule.gamma_start;
  }
  const double frac = static_cast<double>(step) / total_steps;
  return schedule.gamma_start +
         frac * (schedule.gamma_end - schedule.gamma_start);
}

TrajectoryRecord MakeRecord(long step, const LossValueAndGrad& loss,
                            const TabularPolicy& policy,
                            const ReferencePolicy& ref,
                            const PromptDistribution& mu, double beta,
                            double gamma,
                            std::span<const PreferencePair> tracked) {
  const OutcomeSpace& space = *policy.space();
  TrajectoryRecord rec;
  rec.step = step;
  rec.loss = loss.value;
  rec.component = loss.data_term;
  rec.gamma = gamma;
  rec.selected_member = loss.selected_member.value_or(-1);
  rec.kl_fwd = KlDivergence(policy, ref, mu, KlDirection::kForward);
  rec.kl_rev = KlDivergence(policy, ref, mu, KlDirection::kReverse);

  std::vector<char> seen(space.size(), 0);
  double sum_w = 0.0, sum_l = 0.0;
  rec.margins.reserve(tracked.size());
  for (const auto& p : tracked) {
    sum_w += policy.log_prob(p.x, p.y_w);
    sum_l += policy.log_prob(p.x, p.y_l);
    rec.margins.push_back(
        ImplicitRewardDiff(policy, ref, beta, p.x, p.y_w, p.y_l));
    seen[space.Index(p.x, p.y_w)] = 1;
    seen[space.Index(p.x, p.y_l)] = 1;
  }
  if (!tracked.empty()) {
    rec.mean_log_pi_w = sum_w / tracked.size();
    rec.mean_log_pi_l = sum_l / tracked.size();
  }
  for (int x = 0; x < space.num_contexts(); ++x) {
    double unseen = 0.0;
    for (int y = 0; y < space.num_outcomes(x); ++y) {
      if (!seen[space.Index(x, y)]) unseen += policy.prob(x, y);
    }
    rec.mass_on_unseen += mu.weight(x) * unseen;
  }
  rec.overflow = !std::isfinite(rec.loss) || !std::isfinite(rec.kl_fwd) ||
                 !std::isfinite(rec.kl_rev) ||
                 !std::isfinite(rec.mean_log_pi_w) ||
                 !std::isfinite(rec.mean_log_pi_l) || !AllFinite(rec.margins);
  return rec;
}

std::vector<int> EpochBatch(int n, int batch_size, uint64_t seed, long step) {
  if (batch_size <= 0 || batch_size >= n) {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  const long per_epoch = (n + batch_size - 1) / batch_size;
  const long epoch = step / per_epoch;
  const long j = step % per_epoch;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(perm.begin(), perm.end(), rng);
  const int begin = static_cast<int>(j * batch_size);
  const int end = std::min(n, begin + batch_size);
  return std::vector<int>(perm.begin() + begin, perm.begin() + end);
}

GdResult GradientDescent(const LossSpec& spec, const TabularPolicy& policy0,
                         const Hyperparams& hp, const AnnealSchedule& schedule,
                         const GdOptions& options) {
  hp.Validate();
  if (options.record_every < 1) throw ParameterError("record_every must be >= 1");
  const ReferencePolicy& ref = Require(spec.ref, "ref");
  CheckSameSpace(*policy0.space(), *ref.space());
  std::optional<PromptDistribution> tmp;
  const PromptDistribution& mu =
      MuOrUniform(spec, tmp, policy0.space()->num_contexts());
  const std::vector<PreferencePair> tracked =
      options.record_pairs.empty() ? DefaultTracked(spec) : options.record_pairs;
  const bool batched = spec.kind == LossKind::kPdistill && spec.batch_size > 0;
  const int n_triples = spec.triples ? spec.triples->size() : 0;

  std::vector<double> logits = policy0.logits();
  TabularPolicy policy = policy0;
  RunTrajectory traj;
  for (long t = 0; t < hp.steps; ++t) {
    const double gamma = AnnealGamma(t, hp.steps, schedule);
    std::vector<int> batch;
    if (batched) batch = EpochBatch(n_triples, spec.batch_size, spec.batch_seed, t);
    const LossValueAndGrad lg = EvaluateLoss(spec, policy, hp, gamma, batch);
    if (!std::isfinite(lg.value)) throw NonFiniteError("non-finite loss", t);
    if (!AllFinite(lg.grad)) throw NonFiniteError("non-finite gradient", t);
    if (t % options.record_every == 0) {
      traj.records.push_back(
          MakeRecord(t, lg, policy, ref, mu, hp.beta, gamma, tracked));
    }
    bool diverged = false;
    for (size_t i = 0; i < logits.size(); ++i) {
      logits[i] -= hp.lr * lg.grad[i];
      if (std::abs(logits[i]) > options.logit_limit) diverged = true;
    }
    policy = TabularPolicy(policy.space(), logits);
    if (diverged) {
      traj.truncated = true;
      traj.truncated_at = t + 1;
      break;
    }
  }
  const long last = traj.truncated ? traj.truncated_at : hp.steps;
  const double gamma = AnnealGamma(last, hp.steps, schedule);
  const LossValueAndGrad lg = EvaluateLoss(spec, policy, hp, gamma);
  traj.records.push_back(
      MakeRecord(last, lg, policy, ref, mu, hp.beta, gamma, tracked));
  return GdResult{std::move(policy), std::move(traj)};
}

NewtonResult NewtonMinimize(const LossSpec& spec, const TabularPolicy& policy0,
                            const Hyperparams& hp, double gamma,
                            const NewtonOptions& options) {
  hp.Validate();
  if (!(options.fd_step > 0.0)) throw ParameterError("fd_step must be positive");
  const SpacePtr& space = policy0.space();
  const int n = space->size();
  auto eval = [&](const std::vector<double>& logits) {
    return EvaluateLoss(spec, TabularPolicy(space, logits), hp, gamma);
  };
  auto inf_norm = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };

  std::vector<double> logits = policy0.logits();
  LossValueAndGrad cur = eval(logits);
  NewtonResult res{policy0, 0, cur.value, inf_norm(cur.grad), false};
  for (int it = 0; it < options.max_iters; ++it) {
    if (!std::isfinite(cur.value) || !AllFinite(cur.grad)) {
      throw NonFiniteError("non-finite loss in Newton iteration", it);
    }
    if (res.grad_norm <= options.grad_tol) {
      res.converged = true;
      break;
    }
    Eigen::MatrixXd h(n, n);
    std::vector<double> probe = logits;
    for (int j = 0; j < n; ++j) {
      probe[j] = logits[j] + options.fd_step;
      const std::vector<double> up = eval(probe).grad;
      probe[j] = logits[j] - options.fd_step;
      const std::vector<double> dn = eval(probe).grad;
      probe[j] = logits[j];
      for (int i = 0; i < n; ++i) h(i, j) = (up[i] - dn[i]) / (2.0 * options.fd_step);
    }
    h = 0.5 * (h + h.transpose()).eval();
    // Logits are shift-invariant per context; pin that direction.
    for (int x = 0; x < space->num_contexts(); ++x) {
      const int off = space->offset(x), k = space->num_outcomes(x);
      h.block(off, off, k, k).array() += 1.0 / k;
    }
    const Eigen::Map<const Eigen::VectorXd> g(cur.grad.data(), n);
    Eigen::VectorXd d = h.ldlt().solve(-g);
    double slope = g.dot(d);
    if (!d.allFinite() || !(slope < 0.0)) {
      d = -g;
      slope = -g.squaredNorm();
    }
    std::vector<double> next(n);
    LossValueAndGrad trial;
    bool accepted = false;
    // Below this predicted decrease the loss cannot resolve progress, so the
    // line search would only accept vanishing steps.
    const bool resolvable = -slope > 1e-13 * (1.0 + std::abs(cur.value));
    double t = 1.0;
    for (int ls = 0; resolvable && ls < 60; ++ls, t *= 0.5) {
      for (int i = 0; i < n; ++i) next[i] = logits[i] + t * d[i];
      trial = eval(next);
      if (std::isfinite(trial.value) &&
          trial.value <= cur.value + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // A full step that shrinks the gradient is still progress.
      for (int i = 0; i < n; ++i) next[i] = logits[i] + d[i];
      trial = eval(next);
      if (!(inf_norm(trial.grad) < res.grad_norm)) break;
    }
    logits = std::move(next);
    cur = std::move(trial);
    res.iterations = it + 1;
    res.loss = cur.value;
    res.grad_norm = inf_norm(cur.grad);
  }
  if (res.grad_norm <= options.grad_tol) res.converged = true;
  res.policy = TabularPolicy(space, logits);
  return res;
}

std::vector<double> ProjectToSimplex(std::span<const double> v, double total,
                                     double floor) {
  const size_t n = v.size();
  if (n == 0) throw ParameterError("cannot project an empty vector");
  if (floor < 0.0 || floor * n > total) {
    throw ParameterError("infeasible simplex floor");
  }
  const double s = total - floor * n;
  std::vector<double> u(n);
  for (size_t i = 0; i < n; ++i) u[i] = v[i] - floor;
  std::vector<double> sorted(u);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double cum = 0.0, theta = 0.0;
  for (size_t j = 0; j < n; ++j) {
    cum += sorted[j];
    const double t = (cum - s) / static_cast<double>(j + 1);
    if (sorted[j] - t > 0.0) theta = t;
  }
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = std::max(u[i] - theta, 0.0) + floor;
  // u - theta cancels badly when |v| is large; push the rounding residual
  // onto the largest entry so the block sums to `total`.
  const size_t top = std::max_element(out.begin(), out.end()) - out.begin();
  double rest = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (i != top) rest += out[i];
  }
  out[top] = std::max(total - rest, floor);
  return out;
}

SimplexTrajectory ProjectedGdSimplex(const SimplexLossFn& loss,
                                     const OutcomeSpace& space,
                                     const std::vector<double>& probs0,
                                     double lr, long steps,
                                     const ProjectedGdOptions& options) {
  if (!(lr > 0.0)) throw ParameterError("lr must be positive");
  if (steps < 1) throw ParameterError("steps must be at least 1");
  if (options.record_every < 1) throw ParameterError("record_every must be >= 1");
  if (static_cast<int>(probs0.size()) != space.size()) {
    throw ParameterError("probability table size does not match outcome space");
  }
  for (int x = 0; x < space.num_contexts(); ++x) {
    double total = 0.0;
    for (int y = 0; y < space.num_outcomes(x); ++y) {
      const double p = probs0[space.Index(x, y)];
      if (!(p >= 0.0)) throw ParameterError("initial point is off the simplex");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ParameterError("initial point is off the simplex");
    }
  }
  SimplexTrajectory traj;
  std::vector<double> p = probs0;
  std::vector<double> grad(p.size());
  auto record = [&](long t, double value) {
    traj.steps.push_back(t);
    traj.losses.push_back(value);
    traj.points.push_back(p);
  };
  for (long t = 0; t < steps; ++t) {
    std::fill(grad.begin(), grad.end(), 0.0);
    const double value = loss(p, &grad);
    if (t % options.record_every == 0) record(t, value);
    for (size_t i = 0; i < p.size(); ++i) p[i] -= lr * grad[i];
    for (int x = 0; x < space.num_contexts(); ++x) {
      const int off = space.offset(x);
      const int k = space.num_outcomes(x);
      const std::vector<double> q = ProjectToSimplex(
          std::span<const double>(p.data() + off, k), 1.0, options.floor);
      std::copy(q.begin(), q.end(), p.begin() + off);
    }
  }
  record(steps, loss(p, nullptr));
  return traj;
}

SimplexTrajectory ProjectedGdSimplex(const LossSpec& spec,
                                     const Hyperparams& hp,
                                     const std::vector<double>& probs0,
                                     double lr, long steps,
                                     const ProjectedGdOptions& options) {
  const SpacePtr space = Require(spec.ref, "ref").space();
  SimplexLossFn fn = [&](const std::vector<double>& p,
                         std::vector<double>* grad) {
    const TabularPolicy policy = TabularPolicy::FromProbs(space, p);
    const LossValueAndGrad lg = EvaluateLoss(spec, policy, hp, hp.gamma);
    if (grad != nullptr) {
      for (size_t i = 0; i < p.size(); ++i) {
        (*grad)[i] = p[i] > 0.0 ? lg.grad[i] / p[i] : 0.0;
      }
    }
    return lg.value;
  };
  return ProjectedGdSimplex(fn, *space, probs0, lr, steps, options);
}

std::vector<long> MemberSelectionHistogram(const RunTrajectory& trajectory,
                                           int k) {
  if (k < 1) throw ParameterError("ensemble size must be positive");
  std::vector<long> counts(k, 0);
  for (const auto& rec : trajectory.records) {
    if (rec.selected_member < 0) continue;
    if (rec.selected_member >= k) {
      throw ParameterError("ensemble size " + std::to_string(k) +
                           " is smaller than recorded member index " +
                           std::to_string(rec.selected_member));
    }
    ++counts[rec.selected_member];
  }
  return counts;
}

}  // namespace prefopt
