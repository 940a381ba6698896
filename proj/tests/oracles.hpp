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

// Independent reference implementations the test suites compare the library
// against. Each oracle favors the most literal possible formulation (explicit
// enumeration, from-scratch inversion, O(n^2) counting) over speed, so a bug
// would have to appear in two unrelated algorithms to go unnoticed.

#ifndef BITLEAK_TESTS_ORACLES_HPP
#define BITLEAK_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "bitleak/quantgrid.hpp"
#include "bitleak/rng.hpp"
#include "bitleak/tensor.hpp"

namespace bitleak_test {

// AUROC by direct pairwise comparison: P(member score > non-member score),
// ties counted half.
inline double pairwise_auroc(const std::vector<double>& scores,
                             const std::vector<std::uint8_t>& truth) {
  double wins = 0.0, total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (truth[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (truth[j] != 0) continue;
      total += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / total;
}

// Gram matrix X^T X of calibration activations.
inline bitleak::Tensor gram(const bitleak::Tensor& X) {
  return bitleak::matmul_at(X, X);
}

// Layer-output squared error tr((A-B) G (A-B)^T) evaluated element-wise.
inline double gram_mse(const bitleak::Tensor& A, const bitleak::Tensor& B,
                       const bitleak::Tensor& G) {
  double total = 0.0;
  for (std::size_t r = 0; r < A.rows(); ++r) {
    for (std::size_t i = 0; i < A.cols(); ++i) {
      double di = A.at(r, i) - B.at(r, i);
      if (di == 0.0) continue;
      for (std::size_t j = 0; j < A.cols(); ++j) {
        total += di * G.at(i, j) * (A.at(r, j) - B.at(r, j));
      }
    }
  }
  return total;
}

// Exhaustive search over every up/down rounding pattern of W against the
// calibration Gram metric. Returns the minimal achievable squared error.
// Patterns are capped at 2^20 as a safety rail; tests stay far below it.
inline double exhaustive_rounding_mse(const bitleak::Tensor& W,
                                      const bitleak::QuantSpec& spec,
                                      const bitleak::Tensor& G) {
  std::size_t n = W.size();
  std::size_t patterns = std::size_t{1} << n;
  int num_levels = bitleak::levels(spec.bitwidth);
  double best = std::numeric_limits<double>::infinity();
  bitleak::Tensor What = W;
  for (std::size_t mask = 0; mask < patterns; ++mask) {
    for (std::size_t r = 0; r < W.rows(); ++r) {
      double s = spec.scale[r], z = spec.zero_point[r];
      for (std::size_t c = 0; c < W.cols(); ++c) {
        std::size_t flat = r * W.cols() + c;
        double base = std::floor(W.at(r, c) / s + z);
        double code = base + ((mask >> flat) & 1);
        code = std::min(std::max(code, 0.0), double(num_levels - 1));
        What.at(r, c) = s * (code - z);
      }
    }
    best = std::min(best, gram_mse(W, What, G));
  }
  return best;
}

// Round-to-nearest squared error under the same metric, for dominance checks.
inline double rtn_mse(const bitleak::Tensor& W, const bitleak::QuantSpec& spec,
                      const bitleak::Tensor& G) {
  bitleak::Tensor What = W;
  int num_levels = bitleak::levels(spec.bitwidth);
  for (std::size_t r = 0; r < W.rows(); ++r) {
    double s = spec.scale[r], z = spec.zero_point[r];
    for (std::size_t c = 0; c < W.cols(); ++c) {
      double code = bitleak::nearest_code(W.at(r, c), s, z, num_levels);
      What.at(r, c) = s * (code - z);
    }
  }
  return gram_mse(W, What, G);
}

// Dense matrix inverse by Gauss-Jordan elimination with partial pivoting.
// Deliberately unrelated to the library's Cholesky-based path.
inline std::vector<std::vector<double>> gauss_jordan_inverse(
    std::vector<std::vector<double>> a) {
  std::size_t n = a.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    std::swap(inv[col], inv[pivot]);
    double d = a[col][col];
    for (std::size_t j = 0; j < n; ++j) {
      a[col][j] /= d;
      inv[col][j] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return inv;
}

// Greedy OBS-compensated row quantization, re-inverting the active Hessian
// submatrix from scratch at every step.
struct ObcOracleResult {
  std::vector<std::size_t> order;
  std::vector<std::vector<double>> w_after_step;
  std::vector<double> values;
};

inline ObcOracleResult obc_oracle_row(const std::vector<double>& w_in,
                                      const bitleak::Tensor& H, double scale,
                                      double zero_point, int num_levels) {
  std::size_t n = w_in.size();
  std::vector<double> w = w_in;
  std::vector<std::size_t> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = i;
  ObcOracleResult out;
  auto grid_value = [&](double x) {
    double code = bitleak::nearest_code(x, scale, zero_point, num_levels);
    return scale * (code - zero_point);
  };
  while (!active.empty()) {
    std::size_t m = active.size();
    std::vector<std::vector<double>> sub(m, std::vector<double>(m));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        sub[i][j] = H.at(active[i], active[j]);
      }
    }
    std::vector<std::vector<double>> inv = gauss_jordan_inverse(sub);
    std::size_t best_pos = 0;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t pos = 0; pos < m; ++pos) {
      double wq = w[active[pos]];
      double e = wq - grid_value(wq);
      double err = e * e / inv[pos][pos];
      if (err < best_err) {
        best_err = err;
        best_pos = pos;
      }
    }
    std::size_t q = active[best_pos];
    double v = grid_value(w[q]);
    double step = (w[q] - v) / inv[best_pos][best_pos];
    for (std::size_t pos = 0; pos < m; ++pos) {
      w[active[pos]] -= step * inv[pos][best_pos];
    }
    w[q] = v;
    out.order.push_back(q);
    out.w_after_step.push_back(w);
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_pos));
  }
  out.values = w;
  return out;
}

// Random symmetric positive-definite matrix A A^T + n * I scaled down.
inline bitleak::Tensor random_pd(std::size_t n, bitleak::Rng& rng) {
  bitleak::Tensor A = bitleak::Tensor::matrix(n, n);
  for (double& v : A.values) v = rng.gaussian();
  bitleak::Tensor H = bitleak::matmul_bt(A, A);
  for (std::size_t i = 0; i < n; ++i) H.at(i, i) += 0.05 * double(n);
  return H;
}

// Standard normal CDF for analytic ROC comparisons.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace bitleak_test

#endif  // BITLEAK_TESTS_ORACLES_HPP
