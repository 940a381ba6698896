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

#ifndef BITLEAK_METRICS_HPP
#define BITLEAK_METRICS_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace bitleak {

// Empirical ROC curve with derived scalars. Points are produced by a
// group-threshold sweep: one point per distinct score value, equal scores
// crossing the threshold together, plus the (0,0) endpoint. fpr and tpr are
// therefore non-decreasing and end at (1,1).
struct ROCReport {
  std::vector<double> thresholds;  // descending; thresholds[0] = +inf
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auroc = 0.0;
  double log_auroc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// Builds the ROC from attack scores (higher = more member-like) and truth
// bits. Requires both classes present; AUROC is the trapezoid area, which
// equals the Mann-Whitney statistic with ties counted half.
ROCReport roc(const std::vector<double>& scores,
              const std::vector<uint8_t>& truth);

// TPR at the given FPR level, linearly interpolated between curve points.
// Returns through `under_resolved` (if non-null) whether the negative count
// is too small to resolve the level (fewer than 1/level negatives); in that
// case the TPR at the smallest positive empirical FPR is returned.
double tpr_at_fpr(const ROCReport& report, double level,
                  bool* under_resolved = nullptr);

// Low-FPR emphasis summary: trapezoid-weighted mean of TPR over 200
// log-uniformly spaced FPR levels on [1e-3, 1]. On the diagonal curve this
// evaluates to (1 - 1e-3)/ln(1000), about 0.14462.
double log_auroc(const ROCReport& report);

// {"auroc":..., "log_auroc":..., "tpr_at":{"0.001":...}} rendered with
// stable key order and shortest round-trip doubles.
std::string metrics_json(const ROCReport& report);

// Two-column "fpr,tpr" CSV of the curve points.
std::string roc_csv(const ROCReport& report);

}  // namespace bitleak

#endif  // BITLEAK_METRICS_HPP
