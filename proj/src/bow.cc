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

#include "prefopt/bow.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "prefopt/core.h"
#include "prefopt/errors.h"

namespace prefopt {
namespace {

void CheckCounts(const BowModel& model, const CountVector& c) {
  if (static_cast<int>(c.counts.size()) != model.vocab_size()) {
    throw ParameterError("count vector does not match the vocabulary");
  }
  for (int v : c.counts) {
    if (v < 0) throw ParameterError("negative token count");
  }
  if (c.total() != model.n()) {
    throw ParameterError("count total " + std::to_string(c.total()) +
                         " does not match sequence length " +
                         std::to_string(model.n()));
  }
}

double Dot(std::span<const int> c, std::span<const double> theta) {
  double s = 0.0;
  for (size_t i = 0; i < c.size(); ++i) s += c[i] * theta[i];
  return s;
}

void CheckDelta(const BowModel& model, std::span<const int> delta) {
  if (static_cast<int>(delta.size()) != model.vocab_size()) {
    throw ParameterError("count difference does not match the vocabulary");
  }
  if (std::accumulate(delta.begin(), delta.end(), 0) != 0) {
    throw ParameterError("count difference must sum to zero");
  }
}

void Enumerate(int vocab, int n, std::vector<int>& cur,
               std::vector<CountVector>& out) {
  if (vocab == 1) {
    cur.push_back(n);
    out.push_back({cur});
    cur.pop_back();
    return;
  }
  for (int v = 0; v <= n; ++v) {
    cur.push_back(v);
    Enumerate(vocab - 1, n - v, cur, out);
    cur.pop_back();
  }
}

}  // namespace

int CountVector::total() const {
  return std::accumulate(counts.begin(), counts.end(), 0);
}

BowModel::BowModel(std::vector<double> theta, int n)
    : theta_(std::move(theta)), n_(n) {
  if (theta_.empty()) throw ParameterError("empty vocabulary");
  if (n_ < 1) throw ParameterError("sequence length must be at least 1");
  for (double v : theta_) {
    if (!std::isfinite(v)) throw ParameterError("non-finite theta");
  }
}

double BowLogProb(const BowModel& model, const CountVector& c) {
  CheckCounts(model, c);
  return Dot(c.counts, model.theta()) - model.n() * LogSumExp(model.theta());
}

double BowUpperBound(const BowModel& model, const CountVector& c) {
  CheckCounts(model, c);
  const double m = *std::max_element(model.theta().begin(), model.theta().end());
  return Dot(c.counts, model.theta()) - model.n() * m;
}

double BowDpoLoss(const BowModel& model, std::span<const int> delta,
                  double log_ref_ratio, double beta) {
  CheckDelta(model, delta);
  return Softplus(-(beta * Dot(delta, model.theta()) + beta * log_ref_ratio));
}

std::vector<double> BowDpoGradient(const BowModel& model,
                                   std::span<const int> delta,
                                   double log_ref_ratio, double beta) {
  CheckDelta(model, delta);
  const double z = beta * Dot(delta, model.theta()) + beta * log_ref_ratio;
  const double p_wrong = Sigmoid(-z);
  std::vector<double> g(delta.size());
  for (size_t i = 0; i < delta.size(); ++i) g[i] = -p_wrong * beta * delta[i];
  return g;
}

int DegenerateSequence(std::span<const int> delta) {
  if (delta.empty() ||
      std::all_of(delta.begin(), delta.end(), [](int v) { return v == 0; })) {
    throw ParameterError("identical count vectors have no degenerate sequence");
  }
  return static_cast<int>(std::max_element(delta.begin(), delta.end()) -
                          delta.begin());
}

BowStudy BowDescentStudy(const CountVector& y_w, const CountVector& y_l,
                         double beta, double lr, long steps,
                         double log_ref_ratio) {
  if (y_w.total() != y_l.total()) {
    throw PreconditionError("sequences must have equal length");
  }
  if (y_w.counts.size() != y_l.counts.size()) {
    throw PreconditionError("count vectors have different vocabularies");
  }
  if (!(beta > 0.0) || !(lr > 0.0) || steps < 0) {
    throw ParameterError("beta and lr must be positive, steps nonnegative");
  }
  const int vocab = static_cast<int>(y_w.counts.size());
  const int n = y_w.total();
  BowStudy study;
  study.delta.resize(vocab);
  for (int i = 0; i < vocab; ++i) study.delta[i] = y_w.counts[i] - y_l.counts[i];
  study.hat_token = DegenerateSequence(study.delta);
  const int max_delta = study.delta[study.hat_token];
  long cw_dot_delta = 0, delta_sq = 0;
  for (int i = 0; i < vocab; ++i) {
    cw_dot_delta += static_cast<long>(y_w.counts[i]) * study.delta[i];
    delta_sq += static_cast<long>(study.delta[i]) * study.delta[i];
  }
  study.k = static_cast<double>(cw_dot_delta - static_cast<long>(n) * max_delta);

  CountVector hat{std::vector<int>(vocab, 0)};
  hat.counts[study.hat_token] = n;

  BowModel model(std::vector<double>(vocab, 0.0), n);
  double tau = 0.0;
  for (long t = 0; t <= steps; ++t) {
    study.steps.push_back({t, BowLogProb(model, y_w), BowUpperBound(model, y_w),
                           BowLogProb(model, hat), tau});
    if (t == steps) break;
    // theta(t) = tau(t) delta, so delta . theta = tau |delta|^2.
    const double z = beta * (tau * delta_sq + log_ref_ratio);
    tau += lr * beta * Sigmoid(-z);
    std::vector<double> theta = model.theta();
    const std::vector<double> g =
        BowDpoGradient(model, study.delta, log_ref_ratio, beta);
    for (int i = 0; i < vocab; ++i) theta[i] -= lr * g[i];
    model = BowModel(std::move(theta), n);
  }
  study.final_theta = model.theta();
  return study;
}

std::vector<CountVector> AllCountVectors(int vocab, int n) {
  if (vocab < 1 || n < 0) throw ParameterError("invalid vocabulary or length");
  std::vector<CountVector> out;
  std::vector<int> cur;
  Enumerate(vocab, n, cur, out);
  return out;
}

}  // namespace prefopt
