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

#include "bitleak/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bitleak/error.hpp"
#include "bitleak/textio.hpp"

namespace bitleak {

ROCReport roc(const std::vector<double>& scores,
              const std::vector<uint8_t>& truth) {
  if (scores.size() != truth.size()) {
    throw ArgumentError("roc: scores and truth differ in length");
  }
  std::size_t pos = 0, neg = 0;
  for (uint8_t t : truth) (t ? pos : neg) += 1;
  if (pos == 0 || neg == 0) {
    throw ArgumentError("roc: both classes must be present");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw ArgumentError("roc: non-finite score");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  ROCReport rep;
  rep.positives = pos;
  rep.negatives = neg;
  rep.thresholds.push_back(std::numeric_limits<double>::infinity());
  rep.fpr.push_back(0.0);
  rep.tpr.push_back(0.0);

  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    double threshold = scores[order[i]];
    // All examples tied at this score cross the threshold together.
    while (i < order.size() && scores[order[i]] == threshold) {
      if (truth[order[i]]) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    rep.thresholds.push_back(threshold);
    rep.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
    rep.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
  }

  double area = 0.0;
  for (std::size_t p = 1; p < rep.fpr.size(); ++p) {
    area += (rep.fpr[p] - rep.fpr[p - 1]) * (rep.tpr[p] + rep.tpr[p - 1]) / 2.0;
  }
  rep.auroc = area;
  rep.log_auroc = log_auroc(rep);
  return rep;
}

double tpr_at_fpr(const ROCReport& report, double level,
                  bool* under_resolved) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ArgumentError("tpr_at_fpr: level must lie in (0, 1)");
  }
  bool low_resolution =
      static_cast<double>(report.negatives) * level < 1.0;
  if (under_resolved != nullptr) *under_resolved = low_resolution;
  if (low_resolution) {
    // Too few negatives to realize the requested level; report the TPR at
    // the smallest positive empirical FPR instead.
    for (std::size_t i = 0; i < report.fpr.size(); ++i) {
      if (report.fpr[i] > 0.0) {
        double f = report.fpr[i];
        double t = report.tpr[i];
        // A vertical run at the same FPR keeps the highest TPR.
        for (std::size_t j = i + 1;
             j < report.fpr.size() && report.fpr[j] == f; ++j) {
          t = report.tpr[j];
        }
        return t;
      }
    }
    return report.tpr.back();
  }

  // Last curve point at or below the level, then linear interpolation
  // toward the next point. Vertical segments exactly at the level resolve
  // to their top.
  std::size_t j = 0;
  for (std::size_t i = 0; i < report.fpr.size(); ++i) {
    if (report.fpr[i] <= level) j = i;
  }
  if (report.fpr[j] == level || j + 1 >= report.fpr.size()) {
    return report.tpr[j];
  }
  double f0 = report.fpr[j], f1 = report.fpr[j + 1];
  double t0 = report.tpr[j], t1 = report.tpr[j + 1];
  return t0 + (t1 - t0) * (level - f0) / (f1 - f0);
}

namespace {

constexpr int kLogGridPoints = 200;
constexpr double kLogGridLow = 1e-3;

// tpr_at_fpr without the (0,1) precondition so the grid may include 1.0.
double tpr_at_level_closed(const ROCReport& report, double level) {
  if (level >= 1.0) return report.tpr.back();
  return tpr_at_fpr(report, level, nullptr);
}

}  // namespace

double log_auroc(const ROCReport& report) {
  // Trapezoid rule over a uniform grid in ln(fpr): endpoint levels get half
  // weight. This converges to the normalized integral of TPR d(ln fpr).
  double log_low = std::log(kLogGridLow);
  double total = 0.0;
  double weight_sum = 0.0;
  for (int i = 0; i < kLogGridPoints; ++i) {
    double frac = static_cast<double>(i) / (kLogGridPoints - 1);
    double level = std::exp(log_low * (1.0 - frac));
    double w = (i == 0 || i == kLogGridPoints - 1) ? 0.5 : 1.0;
    total += w * tpr_at_level_closed(report, level);
    weight_sum += w;
  }
  return total / weight_sum;
}

std::string metrics_json(const ROCReport& report) {
  bool under = false;
  double tpr001 = tpr_at_fpr(report, 0.001, &under);
  std::string out = "{";
  out += "\"auroc\":" + format_double(report.auroc);
  out += ",\"log_auroc\":" + format_double(report.log_auroc);
  out += ",\"tpr_at\":{\"0.001\":" + format_double(tpr001) + "}";
  out += ",\"tpr_at_0.001_under_resolved\":";
  out += under ? "true" : "false";
  out += "}";
  return out;
}

std::string roc_csv(const ROCReport& report) {
  std::string out = "fpr,tpr\n";
  for (std::size_t i = 0; i < report.fpr.size(); ++i) {
    out += format_double(report.fpr[i]);
    out += ',';
    out += format_double(report.tpr[i]);
    out += '\n';
  }
  return out;
}

}  // namespace bitleak
