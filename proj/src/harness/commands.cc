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

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "prefopt/core.h"
#include "prefopt/harness.h"
#include "prefopt/losses.h"
#include "prefopt/optim.h"
#include "prefopt/oracles.h"
#include "prefopt/synthdata.h"
#include "world.h"

namespace prefopt::harness {
namespace {

using nlohmann::ordered_json;

std::string Fmt(double v) { return FormatDouble(v); }
std::string Fmt(long v) { return std::to_string(v); }
std::string Fmt(int v) { return std::to_string(v); }

std::string Short(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

double Median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string FileStem(std::string s) {
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

// ---------------------------------------------------------------------------
// gradcheck

const std::vector<std::string>& AllLosses() {
  static const std::vector<std::string> v{"dpo", "ipo", "distill", "pdistill",
                                          "pdpo"};
  return v;
}

struct GradInstance {
  LossSpec spec;
  Hyperparams hp;
  double gamma = 0.0;
  TabularPolicy policy{OutcomeSpace::Make(1, 2), {0.0, 0.0}};
};

GradInstance MakeGradInstance(const std::string& loss, const GradcheckConfig& c,
                              uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto uniform_int = [&rng](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  auto normals = [&](int n) {
    std::vector<double> v(n);
    for (double& x : v) x = normal(rng);
    return v;
  };
  std::vector<int> outcomes(uniform_int(1, c.max_contexts));
  for (int& k : outcomes) k = uniform_int(2, c.max_outcomes);
  const SpacePtr space = OutcomeSpace::Make(outcomes);
  const int n = space->size();

  GradInstance g;
  g.policy = TabularPolicy(space, normals(n));
  g.spec.ref = std::make_shared<ReferencePolicy>(
      ReferencePolicy::FromLogits(space, normals(n)));
  std::vector<double> mu(space->num_contexts());
  for (double& w : mu) w = uniform(0.1, 1.0);
  const double total = std::accumulate(mu.begin(), mu.end(), 0.0);
  for (double& w : mu) w /= total;
  g.spec.mu = PromptDistribution(mu);

  auto random_pair = [&](int& x, int& a, int& b) {
    x = uniform_int(0, space->num_contexts() - 1);
    const int k = space->num_outcomes(x);
    a = uniform_int(0, k - 1);
    b = uniform_int(0, k - 2);
    if (b >= a) ++b;
  };
  const int m = uniform_int(1, 6);
  std::vector<double> weights(m);
  for (double& w : weights) w = uniform(0.1, 1.0);
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (double& w : weights) w /= wsum;
  std::vector<PreferencePair> pairs;
  std::vector<Triple> triples;
  for (int i = 0; i < m; ++i) {
    int x, a, b;
    random_pair(x, a, b);
    pairs.push_back({x, a, b});
    triples.push_back({x, a, b});
  }
  g.spec.prefs = std::make_shared<PreferenceDataset>(pairs, weights);
  g.spec.triples = std::make_shared<TripleDataset>(triples, weights);
  g.spec.target = std::make_shared<RewardTable>(space, normals(n));
  std::vector<RewardTable> members;
  const int k = uniform_int(1, 3);
  for (int i = 0; i < k; ++i) members.emplace_back(space, normals(n));
  g.spec.ensemble = std::make_shared<RewardEnsemble>(std::move(members));
  g.spec.kl_mode = uniform_int(0, 1) ? KlMode::kExact : KlMode::kEmpirical;

  g.hp.beta = uniform(0.2, 3.0);
  g.hp.tau_inv = uniform(-1.0, 2.0);
  g.gamma = uniform(0.01, 1.0);
  if (loss == "dpo") g.spec.kind = LossKind::kDpo;
  if (loss == "ipo") g.spec.kind = LossKind::kIpo;
  if (loss == "distill") g.spec.kind = LossKind::kDistill;
  if (loss == "pdistill") g.spec.kind = LossKind::kPdistill;
  if (loss == "pdpo") g.spec.kind = LossKind::kPdpo;
  return g;
}

// Gap between the two smallest member losses; the pessimistic loss has a
// kink where they cross.
double MemberGap(const GradInstance& g) {
  const auto& s = *g.spec.ensemble;
  if (s.size() < 2) return std::numeric_limits<double>::infinity();
  std::vector<double> v;
  for (int i = 0; i < s.size(); ++i) {
    v.push_back(DistillLoss(s.member(i), g.policy, *g.spec.ref, *g.spec.triples,
                            g.hp.beta)
                    .value);
  }
  std::sort(v.begin(), v.end());
  return v[1] - v[0];
}

CommandOutput Gradcheck(const GradcheckConfig& c, uint64_t seed, int workers) {
  const int nl = static_cast<int>(c.losses.size());
  const int ne = static_cast<int>(c.epsilons.size());
  std::vector<std::vector<double>> errs(nl * c.instances);
  ParallelFor(nl * c.instances, workers, [&](int task) {
    const std::string& loss = c.losses[task / c.instances];
    const int inst = task % c.instances;
    const uint64_t loss_id =
        std::find(AllLosses().begin(), AllLosses().end(), loss) - AllLosses().begin();
    GradInstance g;
    for (uint64_t attempt = 0;; ++attempt) {
      g = MakeGradInstance(loss, c, DeriveSeed(seed, {loss_id, uint64_t(inst), attempt}));
      // Resample instances sitting within 1e-3 of a member switch.
      if (loss != "pdistill" || MemberGap(g) > 1e-3) break;
    }
    std::vector<double> analytic =
        EvaluateLoss(g.spec, g.policy, g.hp, g.gamma).grad;
    if (loss == c.inject_sign_flip) {
      for (double& v : analytic) v = -v;
    }
    const PolicyLossFn fn = [&g](const TabularPolicy& p) {
      return EvaluateLoss(g.spec, p, g.hp, g.gamma).value;
    };
    for (int e = 0; e < ne; ++e) {
      errs[task].push_back(
          RelativeGradError(analytic, FiniteDiffGrad(fn, g.policy, c.epsilons[e])));
    }
  });

  CommandOutput out;
  out.command = "gradcheck";
  out.config = c.ToJson();
  CsvTable table({"loss", "epsilon", "instances", "max_rel_error", "passed"});
  out.metrics["max_rel_error"] = ordered_json::object();
  for (int l = 0; l < nl; ++l) {
    double worst_all = 0.0;
    bool ok_all = true;
    for (int e = 0; e < ne; ++e) {
      double worst = 0.0;
      for (int i = 0; i < c.instances; ++i) {
        const double v = errs[l * c.instances + i][e];
        worst = std::isnan(v) ? v : std::max(worst, v);
        if (std::isnan(worst)) break;
      }
      const bool ok = worst < c.tolerance;
      ok_all = ok_all && ok;
      worst_all = std::isnan(worst) ? worst : std::max(worst_all, worst);
      table.AddRow({c.losses[l], Fmt(c.epsilons[e]), Fmt(c.instances), Fmt(worst),
                    ok ? "1" : "0"});
    }
    out.metrics["max_rel_error"][c.losses[l]] = worst_all;
    out.checks.push_back({"gradcheck_" + c.losses[l], ok_all,
                          "max relative error " + Short(worst_all) + " over " +
                              std::to_string(c.instances) + " instances, tolerance " +
                              Short(c.tolerance)});
  }
  out.files.emplace_back("gradcheck.csv", std::move(table));
  return out;
}

// ---------------------------------------------------------------------------
// degeneracy

// Log-ratio margin u at the p-dpo stationary point of a disjoint instance with
// uniform reference over k outcomes and p pairs:
//   empirical: beta sigma(-beta u) = gamma tanh(u / 2)
//   exact:     u = log((r + s) / (r - s)), s = beta sigma(-beta u) / (p gamma)
double PdpoFixedPoint(bool exact, double beta, double gamma, int p, int k) {
  const double r = 1.0 / k;
  auto f = [&](double u) {
    const double lhs = beta * Sigmoid(-beta * u);
    if (!exact) return lhs - gamma * std::tanh(0.5 * u);
    // Solve for s from u: (r + s) / (r - s) = e^u.
    const double s = r * std::tanh(0.5 * u);
    return lhs / (p * gamma) - s;
  };
  double lo = 0.0, hi = 1.0;
  while (f(hi) > 0.0) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

CommandOutput Degeneracy(const DegeneracyConfig& c, uint64_t /*seed*/,
                         int workers) {
  std::vector<PreferencePair> pairs;
  int outcomes = 0;
  if (c.pair_list.empty()) {
    for (int i = 0; i < c.pairs; ++i) pairs.push_back({0, 2 * i, 2 * i + 1});
    outcomes = 2 * c.pairs;
  } else {
    for (const auto& [w, l] : c.pair_list) {
      if (w < 0 || l < 0) throw ConfigError("pair_list entries must be >= 0");
      pairs.push_back({0, w, l});
      outcomes = std::max({outcomes, w + 1, l + 1});
    }
  }
  outcomes += c.unseen;
  const SpacePtr space = OutcomeSpace::Make(1, outcomes);
  auto d = std::make_shared<PreferenceDataset>(pairs);
  auto ref = std::make_shared<ReferencePolicy>(ReferencePolicy::Uniform(space));
  // Rejects non-disjoint instances before any descent.
  DpoDegeneracyCertificate(ref->AsPolicy(), *d, 1e-3);
  const int p = d->size();

  struct MethodRun {
    GdResult result;
    std::shared_ptr<const RewardTable> target;
  };
  std::vector<std::optional<MethodRun>> runs(c.methods.size());
  ParallelFor(static_cast<int>(c.methods.size()), workers, [&](int i) {
    const std::string& m = c.methods[i];
    LossSpec spec;
    spec.ref = ref;
    spec.prefs = d;
    Hyperparams hp;
    hp.beta = c.beta;
    hp.lr = c.lr;
    hp.steps = c.steps;
    AnnealSchedule schedule = AnnealSchedule::Constant(0.0);
    std::shared_ptr<const RewardTable> target;
    if (m == "dpo") {
      spec.kind = LossKind::kDpo;
    } else if (m == "p-dpo") {
      spec.kind = LossKind::kPdpo;
      spec.kl_mode = c.kl_mode == "exact" ? KlMode::kExact : KlMode::kEmpirical;
      schedule = AnnealSchedule::Constant(c.gamma);
    } else {
      spec.kind = LossKind::kDistill;
      target = std::make_shared<RewardTable>(
          TrainRewardMle(*d, space, c.rm_l2, c.rm_lr, c.rm_steps));
      spec.target = target;
      spec.triples = std::make_shared<TripleDataset>(TripleDataset::FromPairs(*d));
    }
    GdOptions options;
    options.record_every = c.record_every;
    runs[i] = MethodRun{GradientDescent(spec, ref->AsPolicy(), hp, schedule, options),
                        target};
  });

  CommandOutput out;
  out.command = "degeneracy";
  out.config = c.ToJson();
  for (size_t i = 0; i < c.methods.size(); ++i) {
    const std::string& m = c.methods[i];
    const GdResult& res = runs[i]->result;
    CsvTable table({"step", "loss", "margin_min", "margin_max", "mean_log_pi_w",
                    "mean_log_pi_l", "kl_fwd", "kl_rev", "mass_on_unseen"});
    for (const auto& r : res.trajectory.records) {
      const auto [lo, hi] = std::minmax_element(r.margins.begin(), r.margins.end());
      table.AddRow({Fmt(r.step), Fmt(r.loss), Fmt(*lo), Fmt(*hi), Fmt(r.mean_log_pi_w),
                    Fmt(r.mean_log_pi_l), Fmt(r.kl_fwd), Fmt(r.kl_rev),
                    Fmt(r.mass_on_unseen)});
    }
    out.files.emplace_back("degeneracy_" + FileStem(m) + ".csv", std::move(table));

    const auto& recs = res.trajectory.records;
    const TrajectoryRecord& last = recs.back();
    const auto [mlo, mhi] = std::minmax_element(last.margins.begin(), last.margins.end());
    const DegeneracyReport cert = DpoDegeneracyCertificate(res.policy, *d, 1e-3);
    ordered_json mm;
    mm["final_margin_min"] = *mlo;
    mm["final_margin_max"] = *mhi;
    mm["final_loss"] = last.loss;
    mm["final_mean_log_pi_l"] = last.mean_log_pi_l;
    mm["certificate_passed"] = cert.passed;
    mm["mass_on_losers"] = cert.mass_on_losers;
    mm["truncated"] = res.trajectory.truncated;

    if (m == "dpo") {
      bool increasing = true;
      for (size_t t = 1; t < recs.size(); ++t) {
        const double prev =
            *std::min_element(recs[t - 1].margins.begin(), recs[t - 1].margins.end());
        if (!(*std::min_element(recs[t].margins.begin(), recs[t].margins.end()) > prev)) {
          increasing = false;
        }
      }
      out.checks.push_back({"dpo_margins_increase", increasing,
                            "margin_min strictly increases across recorded steps"});
      // Every pair shares one log-ratio margin u with
      // u <- u + 2 lr (beta / p) sigma(-beta u).
      double u = 0.0;
      for (long t = 0; t < last.step; ++t) u += 2.0 * c.lr * (c.beta / p) * Sigmoid(-c.beta * u);
      const double want = c.beta * u;
      const double rel = std::max(std::abs(*mlo - want), std::abs(*mhi - want)) /
                         std::max(1.0, std::abs(want));
      mm["recursion_margin"] = want;
      out.checks.push_back({"dpo_matches_recursion", rel < 1e-6,
                            "final margins vs scalar recursion " + Short(want) +
                                ", relative gap " + Short(rel)});
    } else if (m == "p-dpo") {
      const double u = PdpoFixedPoint(c.kl_mode == "exact", c.beta, c.gamma, p, outcomes);
      const double alpha = c.beta / c.gamma;
      const double target = alpha > 2.0 ? std::log(alpha - 1.0) / c.beta
                                         : std::numeric_limits<double>::quiet_NaN();
      const double gap = std::max(std::abs(*mlo / c.beta - u), std::abs(*mhi / c.beta - u));
      mm["fixed_point_log_ratio"] = u;
      mm["one_dim_target_log_ratio"] = target;
      mm["one_dim_target_gap"] = std::abs(*mlo / c.beta - target);
      out.checks.push_back({"pdpo_margin_bounded", std::isfinite(*mhi) && gap < 1e-2,
                            "final log-ratio margins within " + Short(gap) +
                                " of the softmax fixed point " + Short(u)});
    } else {
      const RewardTable& r = *runs[i]->target;
      double worst = 0.0, min_prob = 1.0;
      for (const auto& pr : d->pairs()) {
        const double pw = res.policy.prob(0, pr.y_w), pl = res.policy.prob(0, pr.y_l);
        const double want = DdpoClosedForm(pw, ref->prob(0, pr.y_w), ref->prob(0, pr.y_l),
                                           r.value(0, pr.y_l) - r.value(0, pr.y_w), c.beta);
        worst = std::max(worst, std::abs(pl - want) / want);
        min_prob = std::min({min_prob, pw, pl});
      }
      mm["closed_form_rel_error"] = worst;
      mm["min_pair_prob"] = min_prob;
      out.checks.push_back({"ddpo_matches_closed_form", worst < 1e-6,
                            "loser probabilities vs closed form, relative error " +
                                Short(worst)});
      out.checks.push_back({"ddpo_not_degenerate", min_prob > 0.0 && !cert.passed,
                            "min pair probability " + Short(min_prob) +
                                ", loser mass " + Short(cert.mass_on_losers)});
    }
    out.metrics[m] = mm;
  }
  return out;
}

// ---------------------------------------------------------------------------
// transitivity

struct TransitivityRun {
  std::vector<double> probs;
  std::vector<double> log_psi;  // log(pi / ref), zero mean
  double spread = 0.0;
  bool converged = false;
};

TransitivityRun SolveTransitivity(const std::string& method, ChainKind kind, int n,
                                  double beta, double alpha) {
  const SpacePtr space = OutcomeSpace::Make(1, n);
  auto ref = std::make_shared<ReferencePolicy>(ReferencePolicy::Uniform(space));
  auto d = std::make_shared<PreferenceDataset>(ChainPreferences{n, kind}.Dataset());
  LossSpec spec;
  spec.ref = ref;
  spec.prefs = d;
  Hyperparams hp;
  double gamma = 0.0;
  if (method == "ipo") {
    spec.kind = LossKind::kIpo;
    hp.tau_inv = std::log(alpha - 1.0) / beta;
  } else {
    spec.kind = LossKind::kPdpo;
    spec.kl_mode = KlMode::kExact;
    hp.beta = beta;
    // Summed DPO with weight beta / alpha on the KL, rescaled to the mean form.
    gamma = beta / alpha / d->size();
  }
  const NewtonResult nr = NewtonMinimize(spec, ref->AsPolicy(), hp, gamma);
  TransitivityRun out;
  out.converged = nr.converged;
  out.probs = nr.policy.probs();
  out.log_psi.resize(n);
  for (int y = 0; y < n; ++y) out.log_psi[y] = nr.policy.log_probs()[y] - ref->log_probs()[y];
  const double mean = std::accumulate(out.log_psi.begin(), out.log_psi.end(), 0.0) / n;
  for (double& v : out.log_psi) v -= mean;
  const auto [lo, hi] = std::minmax_element(out.log_psi.begin(), out.log_psi.end());
  out.spread = *hi - *lo;
  return out;
}

CommandOutput Transitivity(const TransitivityConfig& c, uint64_t /*seed*/,
                           int workers) {
  struct Point {
    std::string method;
    int n;
    double beta, alpha;
  };
  std::vector<Point> points;
  for (const auto& m : c.methods) {
    for (int n : c.ns) {
      for (double b : c.betas) {
        for (double a : c.alphas) points.push_back({m, n, b, a});
      }
    }
  }
  std::vector<std::array<TransitivityRun, 2>> runs(points.size());
  ParallelFor(static_cast<int>(points.size()), workers, [&](int i) {
    const Point& p = points[i];
    runs[i][0] = SolveTransitivity(p.method, ChainKind::kChain, p.n, p.beta, p.alpha);
    runs[i][1] = SolveTransitivity(p.method, ChainKind::kClosure, p.n, p.beta, p.alpha);
  });

  CommandOutput out;
  out.command = "transitivity";
  out.config = c.ToJson();
  CsvTable table({"method", "kind", "n", "beta", "alpha", "tau_inv", "gamma", "arm",
                  "prob", "log_psi", "log_psi_analytic", "spread", "spread_analytic"});
  double pdpo_gap = 0.0, ipo_err = 0.0;
  bool compressed = true, converged = true;
  int compressed_points = 0;
  for (size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    const double tau_inv = std::log(p.alpha - 1.0) / p.beta;
    for (int k = 0; k < 2; ++k) {
      const ChainKind kind = k ? ChainKind::kClosure : ChainKind::kChain;
      const TransitivityRun& r = runs[i][k];
      converged = converged && r.converged;
      const bool ipo = p.method == "ipo";
      PsiSolution analytic;
      if (ipo) {
        analytic = IpoChainSolution(p.n, tau_inv, kind);
        ipo_err = std::max(ipo_err, std::abs(r.spread - analytic.psi_inf));
      }
      for (int y = 0; y < p.n; ++y) {
        if (ipo) ipo_err = std::max(ipo_err, std::abs(r.log_psi[y] - analytic.psi[y]));
        table.AddRow({p.method, k ? "closure" : "chain", Fmt(p.n), Fmt(p.beta),
                      Fmt(p.alpha), Fmt(tau_inv),
                      ipo ? "" : Fmt(p.beta / p.alpha), Fmt(y), Fmt(r.probs[y]),
                      Fmt(r.log_psi[y]), ipo ? Fmt(analytic.psi[y]) : "",
                      Fmt(r.spread), ipo ? Fmt(analytic.psi_inf) : ""});
      }
    }
    if (p.method == "ipo") {
      const bool ok = runs[i][1].spread < runs[i][0].spread;
      compressed = compressed && ok;
      compressed_points += ok;
    } else {
      for (int y = 0; y < p.n; ++y) {
        pdpo_gap = std::max(pdpo_gap, std::abs(runs[i][0].probs[y] - runs[i][1].probs[y]));
      }
    }
  }
  out.files.emplace_back("transitivity.csv", std::move(table));
  out.checks.push_back({"solver_converged", converged, "Newton gradient tolerance reached"});
  const auto has = [&](const char* m) {
    return std::find(c.methods.begin(), c.methods.end(), m) != c.methods.end();
  };
  if (has("p-dpo")) {
    out.metrics["pdpo_max_chain_closure_gap"] = pdpo_gap;
    out.checks.push_back({"pdpo_chain_closure_gap", pdpo_gap < c.gap_tolerance,
                          "max per-arm |prob(chain) - prob(closure)| = " +
                              Short(pdpo_gap) + ", tolerance " + Short(c.gap_tolerance)});
  }
  if (has("ipo")) {
    out.metrics["ipo_max_analytic_error"] = ipo_err;
    out.metrics["ipo_compressed_points"] = compressed_points;
    out.checks.push_back({"ipo_closure_compressed", compressed,
                          std::to_string(compressed_points) +
                              " grid points with closure spread below chain spread"});
    out.checks.push_back({"ipo_matches_analytic", ipo_err < 1e-6,
                          "max |log psi - analytic| = " + Short(ipo_err)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// bias-sweep and edpo-rm-dist

uint64_t Bits(double v) { return std::bit_cast<uint64_t>(v); }

uint64_t SeedFor(uint64_t seed, int index) {
  return DeriveSeed(seed, {100, static_cast<uint64_t>(index)});
}

// Worlds per seed, then per-(seed, rho) datasets and reward models.
struct SweepData {
  std::vector<BiasWorld> worlds;
  std::vector<RhoData> rho_data;  // seed-major
};

SweepData BuildSweepData(const WorldConfig& w, const std::vector<double>& rhos,
                         int seeds, uint64_t seed, int workers) {
  SweepData s;
  s.worlds.resize(seeds);
  ParallelFor(seeds, workers, [&](int i) { s.worlds[i] = BuildBiasWorld(w, SeedFor(seed, i)); });
  const int nr = static_cast<int>(rhos.size());
  s.rho_data.resize(seeds * nr);
  ParallelFor(seeds * nr, workers, [&](int t) {
    const int i = t / nr;
    s.rho_data[t] = BuildRhoData(s.worlds[i], w, rhos[t % nr], SeedFor(seed, i));
  });
  return s;
}

bool IsDistillFamily(const std::string& m) {
  return m == "d-dpo" || m == "dp-dpo" || m == "e-dpo";
}

CommandOutput BiasSweep(const BiasSweepConfig& c, uint64_t seed, int workers) {
  const int nr = static_cast<int>(c.rhos.size());
  const SweepData data = BuildSweepData(c.world, c.rhos, c.seeds, seed, workers);

  struct Job {
    int seed_index, rho_index;
    std::string method;
    double hyper;
  };
  std::vector<Job> jobs;
  for (int s = 0; s < c.seeds; ++s) {
    for (int r = 0; r < nr; ++r) {
      for (const auto& m : c.methods) {
        for (double h : m == "ipo" ? c.tau_invs : c.betas) jobs.push_back({s, r, m, h});
      }
    }
  }
  std::vector<MethodResult> results(jobs.size());
  std::vector<char> diverged(jobs.size(), 0);
  ParallelFor(static_cast<int>(jobs.size()), workers, [&](int j) {
    const Job& job = jobs[j];
    const uint64_t s = SeedFor(seed, job.seed_index);
    try {
      results[j] = RunMethod(job.method, job.hyper, data.worlds[job.seed_index],
                             data.rho_data[job.seed_index * nr + job.rho_index], c.run,
                             DeriveSeed(s, {6, Bits(c.rhos[job.rho_index]), Bits(job.hyper)}));
    } catch (const NonFiniteError&) {
      diverged[j] = 1;
      results[j].val_advantage = results[j].test_advantage =
          std::numeric_limits<double>::quiet_NaN();
    }
  });

  CommandOutput out;
  out.command = "bias-sweep";
  out.config = c.ToJson();
  CsvTable runs({"seed_index", "seed", "rho", "method", "hyper_name", "hyper", "metric",
                 "value", "diverged"});
  CsvTable selected({"seed_index", "seed", "rho", "method", "hyper_name", "hyper",
                     "val_advantage", "test_advantage"});
  // best[rho][method] -> per-seed selected test advantage
  std::vector<std::map<std::string, std::vector<double>>> best(nr);
  double max_abs_adv = 0.0;
  for (size_t j = 0; j < jobs.size(); ++j) {
    const Job& job = jobs[j];
    const std::string seed_str = std::to_string(SeedFor(seed, job.seed_index));
    const char* hname = job.method == "ipo" ? "tau_inv" : "beta";
    for (const auto& [metric, value] :
         {std::pair<const char*, double>{"val_advantage", results[j].val_advantage},
          {"test_advantage", results[j].test_advantage}}) {
      runs.AddRow({Fmt(job.seed_index), seed_str, Fmt(c.rhos[job.rho_index]), job.method,
                   hname, Fmt(job.hyper), metric, Fmt(value), diverged[j] ? "1" : "0"});
    }
    if (!diverged[j]) {
      max_abs_adv = std::max({max_abs_adv, std::abs(results[j].val_advantage),
                              std::abs(results[j].test_advantage)});
    }
  }
  // Selection by validation advantage, first grid point on ties.
  for (int s = 0; s < c.seeds; ++s) {
    for (int r = 0; r < nr; ++r) {
      for (const auto& m : c.methods) {
        int pick = -1;
        for (size_t j = 0; j < jobs.size(); ++j) {
          if (jobs[j].seed_index != s || jobs[j].rho_index != r || jobs[j].method != m ||
              diverged[j]) {
            continue;
          }
          if (pick < 0 || results[j].val_advantage > results[pick].val_advantage) {
            pick = static_cast<int>(j);
          }
        }
        const double test = pick < 0 ? std::numeric_limits<double>::quiet_NaN()
                                     : results[pick].test_advantage;
        selected.AddRow({Fmt(s), std::to_string(SeedFor(seed, s)), Fmt(c.rhos[r]), m,
                         m == "ipo" ? "tau_inv" : "beta",
                         pick < 0 ? "nan" : Fmt(jobs[pick].hyper),
                         pick < 0 ? "nan" : Fmt(results[pick].val_advantage), Fmt(test)});
        best[r][m].push_back(test);
      }
    }
  }
  out.files.emplace_back("bias_sweep.csv", std::move(runs));
  out.files.emplace_back("bias_sweep_selected.csv", std::move(selected));

  ordered_json medians = ordered_json::object();
  bool all_positive = true;
  std::string worst_method;
  double worst = std::numeric_limits<double>::infinity();
  for (int r = 0; r < nr; ++r) {
    ordered_json row = ordered_json::object();
    for (const auto& m : c.methods) {
      const double med = Median(best[r][m]);
      row[m] = med;
      if (!(med > 0.0)) all_positive = false;
      if (!(med >= worst)) {
        worst = med;
        worst_method = m + " at rho " + Short(c.rhos[r]);
      }
    }
    medians[Short(c.rhos[r])] = row;
  }
  out.metrics["median_selected_test_advantage"] = medians;
  ordered_json lw = ordered_json::array();
  for (const auto& w : data.worlds) lw.push_back(w.length_weight);
  out.metrics["length_weight"] = lw;
  ordered_json lf = ordered_json::array();
  for (const auto& w : data.worlds) lf.push_back(w.labeled_longer_fraction);
  out.metrics["labeled_longer_fraction"] = lf;

  if (c.world.identical_rewards) {
    out.checks.push_back({"zero_advantage", max_abs_adv <= 1e-6,
                          "max |advantage| = " + Short(max_abs_adv)});
    return out;
  }
  out.checks.push_back({"all_methods_positive", all_positive,
                        "smallest seed-median selected advantage " + Short(worst) +
                            " (" + worst_method + ")"});
  for (double rho : c.distill_rhos) {
    const auto it = std::find(c.rhos.begin(), c.rhos.end(), rho);
    if (it == c.rhos.end()) continue;
    const int r = static_cast<int>(it - c.rhos.begin());
    double best_d = -std::numeric_limits<double>::infinity();
    double best_b = -std::numeric_limits<double>::infinity();
    std::string name_d, name_b;
    for (const auto& m : c.methods) {
      const double med = Median(best[r][m]);
      if (IsDistillFamily(m) && med > best_d) best_d = med, name_d = m;
      if ((m == "dpo" || m == "ipo") && med > best_b) best_b = med, name_b = m;
    }
    if (name_d.empty() || name_b.empty()) continue;
    out.checks.push_back({"distillation_beats_dpo_ipo_rho_" + Short(rho), best_d >= best_b,
                          name_d + " " + Short(best_d) + " vs " + name_b + " " +
                              Short(best_b)});
  }
  return out;
}

CommandOutput EdpoRmDist(const EdpoRmDistConfig& c, uint64_t seed, int workers) {
  const int nr = static_cast<int>(c.rhos.size());
  const int k = static_cast<int>(c.world.b_grid.size());
  const SweepData data = BuildSweepData(c.world, c.rhos, c.seeds, seed, workers);
  std::vector<MethodResult> results(c.seeds * nr);
  ParallelFor(c.seeds * nr, workers, [&](int t) {
    const int s = t / nr, r = t % nr;
    results[t] = RunMethod("e-dpo", c.beta, data.worlds[s], data.rho_data[t], c.run,
                           DeriveSeed(SeedFor(seed, s), {7, Bits(c.rhos[r])}));
  });

  CommandOutput out;
  out.command = "edpo-rm-dist";
  out.config = c.ToJson();
  CsvTable table({"seed_index", "seed", "rho", "member", "b", "count", "fraction"});
  std::vector<std::vector<double>> modal(nr);
  bool degenerate_ok = true;
  for (int s = 0; s < c.seeds; ++s) {
    for (int r = 0; r < nr; ++r) {
      const auto& counts = results[s * nr + r].selection;
      const long total = std::accumulate(counts.begin(), counts.end(), 0L);
      for (int i = 0; i < k; ++i) {
        table.AddRow({Fmt(s), std::to_string(SeedFor(seed, s)), Fmt(c.rhos[r]), Fmt(i),
                      Fmt(c.world.b_grid[i]), Fmt(counts[i]),
                      Fmt(total ? static_cast<double>(counts[i]) / total : 0.0)});
      }
      const int mode = static_cast<int>(std::max_element(counts.begin(), counts.end()) -
                                        counts.begin());
      modal[r].push_back(c.world.b_grid[mode]);
      if (k == 1 && counts[0] != total) degenerate_ok = false;
    }
  }
  out.files.emplace_back("edpo_rm_dist.csv", std::move(table));
  ordered_json med = ordered_json::object();
  for (int r = 0; r < nr; ++r) med[Short(c.rhos[r])] = Median(modal[r]);
  out.metrics["median_modal_b"] = med;
  if (k == 1) {
    out.checks.push_back({"degenerate_histogram", degenerate_ok,
                          "single member receives every selection"});
    return out;
  }
  for (int r = 0; r < nr; ++r) {
    const double rho = c.rhos[r], m = Median(modal[r]);
    if (rho < 0.5) {
      out.checks.push_back({"modal_b_above_half_rho_" + Short(rho), m > 0.5,
                            "seed-median modal b = " + Short(m)});
    } else if (rho > 0.5) {
      out.checks.push_back({"modal_b_below_half_rho_" + Short(rho), m < 0.5,
                            "seed-median modal b = " + Short(m)});
    }
  }
  return out;
}

}  // namespace

CommandOutput RunGradcheck(const GradcheckConfig& c, uint64_t seed, int workers) {
  return Gradcheck(c, seed, workers);
}
CommandOutput RunDegeneracy(const DegeneracyConfig& c, uint64_t seed, int workers) {
  return Degeneracy(c, seed, workers);
}
CommandOutput RunTransitivity(const TransitivityConfig& c, uint64_t seed, int workers) {
  return Transitivity(c, seed, workers);
}
CommandOutput RunBiasSweep(const BiasSweepConfig& c, uint64_t seed, int workers) {
  return BiasSweep(c, seed, workers);
}
CommandOutput RunEdpoRmDist(const EdpoRmDistConfig& c, uint64_t seed, int workers) {
  return EdpoRmDist(c, seed, workers);
}

const std::vector<std::string>& CommandNames() {
  static const std::vector<std::string> v{"gradcheck", "degeneracy", "transitivity",
                                          "bias-sweep", "edpo-rm-dist"};
  return v;
}

CommandOutput Dispatch(const std::string& command, const nlohmann::json& j,
                       uint64_t seed, int workers) {
  if (workers < 1) throw ConfigError("--workers must be at least 1");
  if (command == "gradcheck") return Gradcheck(GradcheckConfig::FromJson(j), seed, workers);
  if (command == "degeneracy") {
    return Degeneracy(DegeneracyConfig::FromJson(j), seed, workers);
  }
  if (command == "transitivity") {
    return Transitivity(TransitivityConfig::FromJson(j), seed, workers);
  }
  if (command == "bias-sweep") return BiasSweep(BiasSweepConfig::FromJson(j), seed, workers);
  if (command == "edpo-rm-dist") {
    return EdpoRmDist(EdpoRmDistConfig::FromJson(j), seed, workers);
  }
  throw ConfigError("unknown subcommand '" + command + "'");
}

int RunCommand(const std::string& command, const std::filesystem::path& config_path,
               uint64_t seed, const std::filesystem::path& out_dir, int workers,
               std::ostream& log) {
  CommandOutput out;
  try {
    out = Dispatch(command, LoadConfigFile(config_path), seed, workers);
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    log << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const PreconditionError& e) {
    log << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const LookupError& e) {
    log << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  WriteOutputs(out, seed, out_dir);
  for (const auto& c : out.checks) {
    log << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
  }
  return out.passed() ? kExitOk : kExitCheckFailed;
}

}  // namespace prefopt::harness
