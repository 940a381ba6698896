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

#include "bitleak/mia.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "bitleak/error.hpp"
#include "bitleak/rng.hpp"
#include "bitleak/textio.hpp"

namespace bitleak {

namespace {

constexpr double kConfidenceClip = 1e-12;
constexpr double kSigmaFloor = 1e-6;
constexpr double kLogTwoPi = 1.8378770664093454836;

double log_normal_pdf(double x, double mu, double sigma) {
  double z = (x - mu) / sigma;
  return -0.5 * kLogTwoPi - std::log(sigma) - 0.5 * z * z;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Sample mean and Bessel-corrected sd; a single sample has sd 0.
void mean_sd(const std::vector<double>& xs, double& mu, double& sd) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  mu = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) {
    sd = 0.0;
    return;
  }
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

bool is_online(LiraMode mode) {
  return mode == LiraMode::Online || mode == LiraMode::OnlineFixedVar;
}

bool is_fixed_var(LiraMode mode) {
  return mode == LiraMode::OnlineFixedVar || mode == LiraMode::OfflineFixedVar;
}

}  // namespace

void MembershipMatrix::validate() const {
  if (shadows == 0 || shadows % 2 != 0) {
    throw ArgumentError("membership matrix needs an even shadow count");
  }
  if (bits.size() != shadows * examples) {
    throw ShapeError("membership matrix bit storage size mismatch");
  }
  std::size_t half = shadows / 2;
  for (std::size_t j = 0; j < examples; ++j) {
    std::size_t in = 0;
    for (std::size_t k = 0; k < shadows; ++k) {
      if (is_in(k, j)) ++in;
    }
    if (in != half) {
      throw IntegrityError("membership column " + std::to_string(j) +
                           " sums to " + std::to_string(in) + ", expected " +
                           std::to_string(half));
    }
  }
}

MembershipMatrix build_shadow_splits(std::size_t examples,
                                     std::size_t shadows,
                                     std::uint64_t seed) {
  if (shadows < 2 || shadows % 2 != 0) {
    throw ArgumentError("shadow count must be even and >= 2, got " +
                        std::to_string(shadows));
  }
  MembershipMatrix m;
  m.shadows = shadows;
  m.examples = examples;
  m.bits.assign(shadows * examples, 0);
  std::size_t half = shadows / 2;
  for (std::size_t j = 0; j < examples; ++j) {
    // A fresh generator per column keeps the matrix independent of traversal
    // order; the first half of a uniform permutation is a uniform subset.
    Rng rng(seed, j);
    std::vector<std::size_t> perm = rng.permutation(shadows);
    for (std::size_t i = 0; i < half; ++i) {
      m.bits[perm[i] * examples + j] = 1;
    }
  }
  return m;
}

ShadowEnsemble train_shadows(const Dataset& ds, std::size_t shadows,
                             std::uint64_t seed, const TrainRecipe& recipe,
                             std::size_t workers) {
  ds.validate();
  recipe.validate();
  ShadowEnsemble ens;
  ens.membership = build_shadow_splits(ds.n(), shadows, seed);
  ens.recipe = recipe;
  ens.models.resize(shadows);

  auto train_one = [&](std::size_t k) {
    std::vector<std::size_t> rows;
    for (std::size_t j = 0; j < ds.n(); ++j) {
      if (ens.membership.is_in(k, j)) rows.push_back(j);
    }
    Dataset subset = ds.subset(rows);
    Network net = mlp_template(ds.dim(), ds.class_count,
                               Rng::mix2(seed, 2 * k));
    TrainRecipe rk = recipe;
    rk.seed = Rng::mix2(seed, 2 * k + 1);
    train(net, subset, rk);
    ens.models[k] = std::move(net);
  };

  if (workers <= 1) {
    for (std::size_t k = 0; k < shadows; ++k) train_one(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::size_t n_threads = std::min(workers, shadows);
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t k = next.fetch_add(1);
          if (k >= shadows) return;
          train_one(k);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }
  return ens;
}

double logit_confidence(double p_true) {
  double p = std::min(std::max(p_true, kConfidenceClip),
                      1.0 - kConfidenceClip);
  return std::log(p) - std::log(1.0 - p);
}

std::vector<double> model_phi(const Network& net, const Dataset& queries) {
  queries.validate();
  std::vector<double> phi(queries.n());
  constexpr std::size_t kBatch = 512;
  for (std::size_t start = 0; start < queries.n(); start += kBatch) {
    std::size_t stop = std::min(start + kBatch, queries.n());
    Tensor block = Tensor::matrix(stop - start, queries.dim());
    for (std::size_t i = start; i < stop; ++i) {
      const double* src = queries.inputs.row(i);
      std::copy(src, src + queries.dim(), block.row(i - start));
    }
    Tensor probs = forward(net, block);
    for (std::size_t i = start; i < stop; ++i) {
      int y = queries.labels[i];
      phi[i] = logit_confidence(probs.at(i - start, static_cast<std::size_t>(y)));
    }
  }
  return phi;
}

Tensor shadow_phi(const ShadowEnsemble& ens, const Dataset& queries) {
  if (ens.membership.examples != queries.n()) {
    throw ShapeError("shadow_phi: membership covers " +
                     std::to_string(ens.membership.examples) +
                     " examples, queries have " + std::to_string(queries.n()));
  }
  Tensor phi = Tensor::matrix(ens.models.size(), queries.n());
  for (std::size_t k = 0; k < ens.models.size(); ++k) {
    std::vector<double> row = model_phi(ens.models[k], queries);
    std::copy(row.begin(), row.end(), phi.row(k));
  }
  return phi;
}

std::string lira_mode_label(LiraMode mode) {
  switch (mode) {
    case LiraMode::Online:
      return "online";
    case LiraMode::OnlineFixedVar:
      return "online_fixed";
    case LiraMode::Offline:
      return "offline";
    case LiraMode::OfflineFixedVar:
      return "offline_fixed";
  }
  throw ArgumentError("unknown lira mode");
}

LiraMode lira_mode_from_label(const std::string& label) {
  if (label == "online") return LiraMode::Online;
  if (label == "online_fixed") return LiraMode::OnlineFixedVar;
  if (label == "offline") return LiraMode::Offline;
  if (label == "offline_fixed") return LiraMode::OfflineFixedVar;
  throw ConfigError("unknown lira mode label: " + label);
}

LiraStats fit_lira_stats(const Tensor& phi, const MembershipMatrix& m,
                         LiraMode mode) {
  phi.require_2d();
  if (phi.rows() != m.shadows || phi.cols() != m.examples) {
    throw ShapeError("fit_lira_stats: phi matrix is " +
                     std::to_string(phi.rows()) + "x" +
                     std::to_string(phi.cols()) + ", membership is " +
                     std::to_string(m.shadows) + "x" +
                     std::to_string(m.examples));
  }
  std::size_t N = m.examples;
  LiraStats st;
  st.mode = mode;
  st.mu_in.assign(N, 0.0);
  st.sigma_in.assign(N, 0.0);
  st.mu_out.assign(N, 0.0);
  st.sigma_out.assign(N, 0.0);

  bool online = is_online(mode);
  std::vector<double> in_vals, out_vals;
  for (std::size_t j = 0; j < N; ++j) {
    in_vals.clear();
    out_vals.clear();
    for (std::size_t k = 0; k < m.shadows; ++k) {
      // Offline modes must not depend on in-shadow confidences at all.
      if (m.is_in(k, j)) {
        if (online) in_vals.push_back(phi.at(k, j));
      } else {
        out_vals.push_back(phi.at(k, j));
      }
    }
    if (out_vals.empty()) {
      throw CoverageError("example " + std::to_string(j) +
                          " has no out-shadows");
    }
    if (online && in_vals.empty()) {
      throw CoverageError("example " + std::to_string(j) +
                          " has no in-shadows");
    }
    double mu, sd;
    mean_sd(out_vals, mu, sd);
    st.mu_out[j] = mu;
    st.sigma_out[j] = std::max(sd, kSigmaFloor);
    if (online) {
      mean_sd(in_vals, mu, sd);
      st.mu_in[j] = mu;
      st.sigma_in[j] = std::max(sd, kSigmaFloor);
    }
  }

  if (is_fixed_var(mode)) {
    double pool = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < N; ++j) {
      pool += st.sigma_out[j];
      ++count;
      if (online) {
        pool += st.sigma_in[j];
        ++count;
      }
    }
    pool = std::max(pool / static_cast<double>(count), kSigmaFloor);
    for (std::size_t j = 0; j < N; ++j) {
      st.sigma_out[j] = pool;
      if (online) st.sigma_in[j] = pool;
    }
  }
  return st;
}

LiraStats fit_lira_stats(const ShadowEnsemble& ens, const Dataset& queries,
                         LiraMode mode) {
  return fit_lira_stats(shadow_phi(ens, queries), ens.membership, mode);
}

double lira_score(double phi, double mu_in, double mu_out, double sigma_in,
                  double sigma_out, LiraMode mode) {
  if (!(sigma_out > 0.0) || (is_online(mode) && !(sigma_in > 0.0))) {
    throw ArgumentError("lira_score: sigma must be positive");
  }
  if (is_online(mode)) {
    return log_normal_pdf(phi, mu_in, sigma_in) -
           log_normal_pdf(phi, mu_out, sigma_out);
  }
  // One-sided test against the out-distribution; kept strictly inside (0, 1)
  // even when the CDF saturates in double precision.
  double p = normal_cdf((phi - mu_out) / sigma_out);
  p = std::min(p, std::nextafter(1.0, 0.0));
  p = std::max(p, std::numeric_limits<double>::min());
  return p;
}

std::vector<double> lira_scores(const std::vector<double>& phi_target,
                                const LiraStats& stats) {
  if (phi_target.size() != stats.examples()) {
    throw ShapeError("lira_scores: " + std::to_string(phi_target.size()) +
                     " queries vs stats for " +
                     std::to_string(stats.examples()));
  }
  std::vector<double> scores(phi_target.size());
  for (std::size_t j = 0; j < phi_target.size(); ++j) {
    scores[j] = lira_score(phi_target[j], stats.mu_in[j], stats.mu_out[j],
                           stats.sigma_in[j], stats.sigma_out[j], stats.mode);
  }
  return scores;
}

AttackResult attack_with_stats(const Network& target, const Dataset& queries,
                               const std::vector<int>& truth,
                               const LiraStats& stats) {
  if (truth.size() != queries.n()) {
    throw ShapeError("attack: truth size does not match query count");
  }
  std::size_t members = 0;
  for (int t : truth) {
    if (t != 0 && t != 1) {
      throw ArgumentError("attack: truth bits must be 0 or 1");
    }
    members += static_cast<std::size_t>(t);
  }
  if (members * 2 != truth.size()) {
    throw ArgumentError("attack: queries must balance members (" +
                        std::to_string(members) + ") and non-members (" +
                        std::to_string(truth.size() - members) + ")");
  }
  AttackResult r;
  r.truth = truth;
  r.phi_target = model_phi(target, queries);
  r.stats = stats;
  r.scores = lira_scores(r.phi_target, stats);
  for (double s : r.scores) {
    if (!std::isfinite(s)) {
      throw NumericalError("attack produced a non-finite score");
    }
  }
  return r;
}

AttackResult attack(const Network& target, const Dataset& queries,
                    const std::vector<int>& truth, const ShadowEnsemble& ens,
                    LiraMode mode) {
  return attack_with_stats(target, queries, truth,
                           fit_lira_stats(ens, queries, mode));
}

std::string scores_csv(const AttackResult& r) {
  std::string out = "example_id,phi_target,mu_in,mu_out,sigma,score,truth\n";
  for (std::size_t j = 0; j < r.scores.size(); ++j) {
    out += std::to_string(j);
    out += ',';
    out += format_double(r.phi_target[j]);
    out += ',';
    out += format_double(r.stats.mu_in[j]);
    out += ',';
    out += format_double(r.stats.mu_out[j]);
    out += ',';
    out += format_double(r.stats.sigma_out[j]);
    out += ',';
    out += format_double(r.scores[j]);
    out += ',';
    out += std::to_string(r.truth[j]);
    out += '\n';
  }
  return out;
}

}  // namespace bitleak
