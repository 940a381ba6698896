/*
 * Copyright 2026 The Bitleak Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef BITLEAK_MIA_HPP
#define BITLEAK_MIA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "bitleak/dataset.hpp"
#include "bitleak/network.hpp"
#include "bitleak/tensor.hpp"

namespace bitleak {

// Which shadow trained on which example. Row k is shadow k's training mask;
// every column sums to exactly shadows/2, so each example has balanced in-
// and out-populations.
struct MembershipMatrix {
  std::size_t shadows = 0;
  std::size_t examples = 0;
  std::vector<std::uint8_t> bits;  // row-major [shadows x examples]

  bool is_in(std::size_t shadow, std::size_t example) const {
    return bits[shadow * examples + example] != 0;
  }
  // Checks even shadow count and exact column balance.
  void validate() const;
};

// Balanced random membership: each column is an independent uniform draw of
// shadows/2 rows, from a generator seeded by (seed, column).
MembershipMatrix build_shadow_splits(std::size_t examples,
                                     std::size_t shadows, std::uint64_t seed);

struct ShadowEnsemble {
  std::vector<Network> models;
  MembershipMatrix membership;
  TrainRecipe recipe;
};

// Trains one model per membership row on exactly the rows marked 1. Shadow
// k's init and epoch shuffles are derived from (seed, k), so results do not
// depend on worker count or scheduling. workers > 1 trains models in
// parallel threads.
ShadowEnsemble train_shadows(const Dataset& ds, std::size_t shadows,
                             std::uint64_t seed, const TrainRecipe& recipe,
                             std::size_t workers = 1);

// Logit-scaled confidence: ln(p) - ln(1 - p) with p clipped to
// [1e-12, 1 - 1e-12], so the statistic is finite even at p = 0 or 1.
double logit_confidence(double p_true);

// Per-example logit confidence of the true class under one model.
std::vector<double> model_phi(const Network& net, const Dataset& queries);

// Confidence matrix [shadows x examples]: every shadow scored on every query.
Tensor shadow_phi(const ShadowEnsemble& ens, const Dataset& queries);

enum class LiraMode { Online, OnlineFixedVar, Offline, OfflineFixedVar };
std::string lira_mode_label(LiraMode mode);
LiraMode lira_mode_from_label(const std::string& label);

// Per-example Gaussian fits of the shadow confidences. Offline modes fit the
// out-population only and never read in-shadow values; their mu_in/sigma_in
// stay zero. Fixed-variance modes replace every per-example sigma by one
// pooled value (the mean of the per-example standard deviations). All sigmas
// are floored at 1e-6.
struct LiraStats {
  LiraMode mode = LiraMode::Online;
  std::vector<double> mu_in, sigma_in;
  std::vector<double> mu_out, sigma_out;

  std::size_t examples() const { return mu_out.size(); }
};

// Fits stats from a [shadows x examples] confidence matrix. An example with
// zero out-shadows (or, in online modes, zero in-shadows) raises
// CoverageError.
LiraStats fit_lira_stats(const Tensor& phi, const MembershipMatrix& m,
                         LiraMode mode);
LiraStats fit_lira_stats(const ShadowEnsemble& ens, const Dataset& queries,
                         LiraMode mode);

// Likelihood-ratio score for one query. Online modes: difference of Gaussian
// log densities, ln N(phi; mu_in, sigma_in^2) - ln N(phi; mu_out,
// sigma_out^2). Offline modes: the out-distribution CDF at phi, in (0, 1).
// Higher always means more likely member.
double lira_score(double phi, double mu_in, double mu_out, double sigma_in,
                  double sigma_out, LiraMode mode);

// lira_score applied per example against fitted stats.
std::vector<double> lira_scores(const std::vector<double>& phi_target,
                                const LiraStats& stats);

// Scores plus everything the persisted CSV needs.
struct AttackResult {
  std::vector<double> scores;
  std::vector<int> truth;
  std::vector<double> phi_target;
  LiraStats stats;
};

// Full attack: score every query against the target model using stats fitted
// from the ensemble. Queries must contain equal counts of members and
// non-members per `truth`; scores are checked finite.
AttackResult attack(const Network& target, const Dataset& queries,
                    const std::vector<int>& truth, const ShadowEnsemble& ens,
                    LiraMode mode);

// Same attack with stats already fitted; lets one shadow ensemble serve many
// target models without refitting.
AttackResult attack_with_stats(const Network& target, const Dataset& queries,
                               const std::vector<int>& truth,
                               const LiraStats& stats);

// CSV with header example_id,phi_target,mu_in,mu_out,sigma,score,truth.
// The sigma column is the (possibly pooled) out-sigma used for that example.
std::string scores_csv(const AttackResult& r);

}  // namespace bitleak

#endif  // BITLEAK_MIA_HPP
