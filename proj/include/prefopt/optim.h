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

// Deterministic descent drivers and trajectory recording.

#ifndef PREFOPT_OPTIM_H_
#define PREFOPT_OPTIM_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "prefopt/core.h"
#include "prefopt/losses.h"

namespace prefopt {

enum class LossKind { kDpo, kIpo, kDistill, kPdistill, kPdpo, kCustom };

// Custom losses receive the gamma in effect and the current batch.
using CustomLossFn = std::function<LossValueAndGrad(
    const TabularPolicy&, double gamma, std::span<const int> batch)>;

// Which loss to descend and the data it needs. Shared pointers let many
// concurrent runs reuse one dataset.
struct LossSpec {
  LossKind kind = LossKind::kDpo;
  std::shared_ptr<const ReferencePolicy> ref;
  std::optional<PromptDistribution> mu;  // uniform when unset
  std::shared_ptr<const PreferenceDataset> prefs;   // dpo, ipo, pdpo
  std::shared_ptr<const TripleDataset> triples;     // distill, pdistill
  std::shared_ptr<const RewardTable> target;        // distill
  std::shared_ptr<const RewardEnsemble> ensemble;   // pdistill
  KlMode kl_mode = KlMode::kExact;
  // pdistill mini-batching; 0 means full batch.
  int batch_size = 0;
  uint64_t batch_seed = 0;
  CustomLossFn custom;
};

LossValueAndGrad EvaluateLoss(const LossSpec& spec, const TabularPolicy& policy,
                              const Hyperparams& hp, double gamma,
                              std::span<const int> batch = {});

struct AnnealSchedule {
  enum class Mode { kLinear, kConstant };
  double gamma_start = 0.0;
  double gamma_end = 0.0;
  Mode mode = Mode::kConstant;

  static AnnealSchedule Constant(double gamma) {
    return {gamma, gamma, Mode::kConstant};
  }
  static AnnealSchedule Linear(double start, double end) {
    return {start, end, Mode::kLinear};
  }
};

// Linear: start + (step / total) (end - start); constant: start.
double AnnealGamma(long step, long total_steps, const AnnealSchedule& schedule);

struct TrajectoryRecord {
  long step = 0;
  double loss = 0.0;
  double component = 0.0;
  double kl_fwd = 0.0;  // KL(ref || pi)
  double kl_rev = 0.0;  // KL(pi || ref)
  double mean_log_pi_w = 0.0;
  double mean_log_pi_l = 0.0;
  std::vector<double> margins;  // implicit reward diff per tracked pair
  int selected_member = -1;     // -1 when not applicable
  double gamma = 0.0;
  double mass_on_unseen = 0.0;  // E_mu mass on outcomes no tracked pair uses
  bool overflow = false;        // some recorded value is not finite
};

struct RunTrajectory {
  std::vector<TrajectoryRecord> records;
  bool truncated = false;  // divergence guard fired
  long truncated_at = -1;
};

struct GdResult {
  TabularPolicy policy;
  RunTrajectory trajectory;
};

struct GdOptions {
  // Pairs whose margins and log-likelihoods are tracked; the loss dataset's
  // pairs when empty.
  std::vector<PreferencePair> record_pairs;
  // Record every k-th step; the final state is always recorded.
  long record_every = 1;
  // Abort (and mark truncated) when any |logit| exceeds this.
  double logit_limit = 1e6;
};

// Plain full-batch (or seeded mini-batch, pdistill) gradient descent on
// logits. Throws NonFiniteError on a non-finite loss or gradient.
GdResult GradientDescent(const LossSpec& spec, const TabularPolicy& policy0,
                         const Hyperparams& hp, const AnnealSchedule& schedule,
                         const GdOptions& options = {});

// Trajectory record of `policy` under the given loss evaluation.
TrajectoryRecord MakeRecord(long step, const LossValueAndGrad& loss,
                            const TabularPolicy& policy,
                            const ReferencePolicy& ref,
                            const PromptDistribution& mu, double beta,
                            double gamma,
                            std::span<const PreferencePair> tracked);

struct NewtonOptions {
  int max_iters = 500;
  // Stop once ||grad||_inf falls below this.
  double grad_tol = 1e-12;
  // Central-difference step for the Hessian of the analytic gradient.
  double fd_step = 1e-5;
};

struct NewtonResult {
  TabularPolicy policy;
  int iterations = 0;
  double loss = 0.0;
  double grad_norm = 0.0;  // ||grad||_inf at the returned policy
  bool converged = false;
};

// Damped Newton on logits at a fixed gamma, with a finite-difference Hessian
// and Armijo backtracking. For small convex problems where plain descent is
// too slow, e.g. the transitivity fixed points.
NewtonResult NewtonMinimize(const LossSpec& spec, const TabularPolicy& policy0,
                            const Hyperparams& hp, double gamma,
                            const NewtonOptions& options = {});

// Euclidean projection onto {p : p_i >= floor, sum p = total}.
std::vector<double> ProjectToSimplex(std::span<const double> v,
                                     double total = 1.0, double floor = 0.0);

// Loss over per-context probability blocks; fills `grad` when non-null.
using SimplexLossFn =
    std::function<double(const std::vector<double>& probs,
                         std::vector<double>* grad)>;

struct SimplexTrajectory {
  std::vector<long> steps;
  std::vector<double> losses;
  std::vector<std::vector<double>> points;
  const std::vector<double>& final_point() const { return points.back(); }
};

struct ProjectedGdOptions {
  double floor = 0.0;  // lower bound on every probability after projection
  long record_every = 1;
};

// Projected gradient descent with each context's block projected back onto
// its simplex after every step.
SimplexTrajectory ProjectedGdSimplex(const SimplexLossFn& loss,
                                     const OutcomeSpace& space,
                                     const std::vector<double>& probs0,
                                     double lr, long steps,
                                     const ProjectedGdOptions& options = {});

// Same, on a logit-space loss evaluated at softmax(log p); the probability
// gradient is grad_logit / p.
SimplexTrajectory ProjectedGdSimplex(const LossSpec& spec,
                                     const Hyperparams& hp,
                                     const std::vector<double>& probs0,
                                     double lr, long steps,
                                     const ProjectedGdOptions& options = {});

// Counts of selected members over recorded steps.
std::vector<long> MemberSelectionHistogram(const RunTrajectory& trajectory,
                                           int k);

// Deterministic per-epoch partition of [0, n) into batches of `batch_size`.
std::vector<int> EpochBatch(int n, int batch_size, uint64_t seed, long step);

}  // namespace prefopt

#endif  // PREFOPT_OPTIM_H_
