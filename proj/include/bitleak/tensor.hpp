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

#ifndef BITLEAK_TENSOR_HPP
#define BITLEAK_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bitleak/error.hpp"

namespace bitleak {

// Dense row-major tensor of 64-bit floats. All numerics in this project run
// in doubles so quantization experiments measure grid effects, not float32
// rounding noise.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_in, double fill = 0.0)
      : shape(std::move(shape_in)) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    values.assign(n, fill);
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }

  std::size_t size() const { return values.size(); }

  std::size_t rows() const {
    require_2d();
    return shape[0];
  }
  std::size_t cols() const {
    require_2d();
    return shape[1];
  }

  double& at(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return values[r * shape[1] + c];
  }

  const double* row(std::size_t r) const { return values.data() + r * shape[1]; }
  double* row(std::size_t r) { return values.data() + r * shape[1]; }

  void require_2d() const {
    if (shape.size() != 2) {
      throw ShapeError("expected rank-2 tensor, got rank " +
                       std::to_string(shape.size()));
    }
  }

  bool finite() const {
    for (double v : values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

inline void require_finite(const Tensor& t, const std::string& context) {
  if (!t.finite()) {
    throw NumericalError("non-finite value in " + context);
  }
}

// out[r, c] = sum_k a[r, k] * b[k, c]. Loop order keeps both inner accesses
// contiguous; this one function carries most of the project's compute.
inline void matmul_into(const Tensor& a, const Tensor& b, Tensor& out) {
  std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul inner dimensions differ: " + std::to_string(k) +
                     " vs " + std::to_string(b.rows()));
  }
  if (out.shape.size() != 2 || out.rows() != n || out.cols() != m) {
    out = Tensor::matrix(n, m);
  } else {
    std::fill(out.values.begin(), out.values.end(), 0.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      double av = arow[p];
      const double* brow = b.row(p);
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor out;
  matmul_into(a, b, out);
  return out;
}

// out = a * b^T, shapes [n x k] * [m x k] -> [n x m].
inline Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (b.cols() != k) {
    throw ShapeError("matmul_bt inner dimensions differ");
  }
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = b.row(j);
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out.at(i, j) = acc;
    }
  }
  return out;
}

// out = a^T * b, shapes [k x n] * [k x m] -> [n x m].
inline Tensor matmul_at(const Tensor& a, const Tensor& b) {
  std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul_at inner dimensions differ");
  }
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a.row(p);
    const double* brow = b.row(p);
    for (std::size_t i = 0; i < n; ++i) {
      double av = arow[i];
      double* orow = out.row(i);
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

}  // namespace bitleak

#endif  // BITLEAK_TENSOR_HPP
