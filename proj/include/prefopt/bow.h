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

// Bag-of-words policies: pi(y) proportional to exp(c(y) . theta) over
// length-n sequences, so log pi(y) = c(y) . theta - n logsumexp(theta).

#ifndef PREFOPT_BOW_H_
#define PREFOPT_BOW_H_

#include <span>
#include <vector>

namespace prefopt {

struct CountVector {
  std::vector<int> counts;

  int total() const;
};

class BowModel {
 public:
  // theta must be finite and n >= 1.
  BowModel(std::vector<double> theta, int n);

  int vocab_size() const { return static_cast<int>(theta_.size()); }
  int n() const { return n_; }
  const std::vector<double>& theta() const { return theta_; }

 private:
  std::vector<double> theta_;
  int n_;
};

// c . theta - n logsumexp(theta). Throws ParameterError when the counts do
// not total n or do not match the vocabulary.
double BowLogProb(const BowModel& model, const CountVector& c);

// c . theta - n max theta; never below BowLogProb.
double BowUpperBound(const BowModel& model, const CountVector& c);

// -log sigma(beta (delta . theta) + beta log_ref_ratio).
double BowDpoLoss(const BowModel& model, std::span<const int> delta,
                  double log_ref_ratio, double beta);

// Gradient of BowDpoLoss in theta:
// -(1 - sigma(beta (delta . theta) + beta log_ref_ratio)) beta delta.
std::vector<double> BowDpoGradient(const BowModel& model,
                                   std::span<const int> delta,
                                   double log_ref_ratio, double beta);

// Smallest index attaining max delta. Throws ParameterError on all-zero
// delta.
int DegenerateSequence(std::span<const int> delta);

struct BowStep {
  long step = 0;
  double log_pi_w = 0.0;     // log pi(y^w)
  double log_upper_w = 0.0;  // log of the upper bound at y^w
  double log_pi_hat = 0.0;   // log pi(yhat), yhat = n copies of the hat token
  double tau = 0.0;          // accumulated eta beta p(y^l > y^w)
};

struct BowStudy {
  std::vector<int> delta;  // c(y^w) - c(y^l)
  int hat_token = 0;
  double k = 0.0;  // c(y^w) . delta - n max delta, always <= 0
  std::vector<BowStep> steps;  // steps 0..num_steps
  std::vector<double> final_theta;
};

// Gradient descent on the single-pair BoW DPO loss from theta = 0. tau(t)
// is accumulated from the recursion theta(t) = theta(t-1) + eta beta p delta,
// independently of the theta iterates. Throws PreconditionError on unequal
// lengths.
BowStudy BowDescentStudy(const CountVector& y_w, const CountVector& y_l,
                         double beta, double lr, long steps,
                         double log_ref_ratio = 0.0);

// Every count vector with `vocab` entries totalling n, lexicographic.
std::vector<CountVector> AllCountVectors(int vocab, int n);

}  // namespace prefopt

#endif  // PREFOPT_BOW_H_
