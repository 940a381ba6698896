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

#include "bitleak/quantgrid.hpp"

#include <algorithm>
#include <cmath>

#include "bitleak/error.hpp"

namespace bitleak {

namespace {

constexpr double kScaleFloor = 1e-12;
// Largest integer-valued double we allow as a zero-point; beyond this,
// integer arithmetic in doubles stops being exact.
constexpr double kZeroPointCap = 9007199254740992.0;  // 2^53

}  // namespace

int levels(BitWidth bw) {
  switch (bw) {
    case BitWidth::B1:
      return 2;
    case BitWidth::B158:
      return 3;
    case BitWidth::B2:
      return 4;
    case BitWidth::B4:
      return 16;
    case BitWidth::B8:
      return 256;
    case BitWidth::Full:
      return 0;
  }
  throw ArgumentError("unknown bitwidth");
}

std::string bitwidth_label(BitWidth bw) {
  switch (bw) {
    case BitWidth::B1:
      return "b1";
    case BitWidth::B158:
      return "b158";
    case BitWidth::B2:
      return "b2";
    case BitWidth::B4:
      return "b4";
    case BitWidth::B8:
      return "b8";
    case BitWidth::Full:
      return "full";
  }
  throw ArgumentError("unknown bitwidth");
}

BitWidth bitwidth_from_label(const std::string& label) {
  if (label == "b1") return BitWidth::B1;
  if (label == "b158") return BitWidth::B158;
  if (label == "b2") return BitWidth::B2;
  if (label == "b4") return BitWidth::B4;
  if (label == "b8") return BitWidth::B8;
  if (label == "full") return BitWidth::Full;
  throw ConfigError("unknown bitwidth label: " + label);
}

double clamp(double a, double lo, double hi) {
  if (lo > hi) {
    throw ArgumentError("clamp bounds inverted: lo > hi");
  }
  return std::max(lo, std::min(a, hi));
}

std::pair<double, double> calibrate_minmax(const std::vector<double>& channel,
                                           BitWidth bw) {
  if (channel.empty()) {
    throw ArgumentError("calibrate_minmax: empty channel");
  }
  int L = levels(bw);
  if (L < 2) {
    throw ArgumentError("calibrate_minmax: bitwidth has no grid");
  }
  auto [mn_it, mx_it] = std::minmax_element(channel.begin(), channel.end());
  double mn = *mn_it, mx = *mx_it;
  double s = (mx - mn) / static_cast<double>(L - 1);
  if (s < kScaleFloor) s = kScaleFloor;
  double z = round_half_away(-mn / s);
  // Keep z where double integer arithmetic is exact. Only channels constant
  // at astronomical magnitude hit the cap.
  z = std::max(-kZeroPointCap, std::min(z, kZeroPointCap));
  return {s, z};
}

QuantSpec calibrate_layer(const Tensor& W, BitWidth bw) {
  if (bw == BitWidth::Full) {
    throw ArgumentError("calibrate_layer: Full has no grid");
  }
  if (bw == BitWidth::B1) {
    return sign_quantize(W).spec;
  }
  QuantSpec spec;
  spec.bitwidth = bw;
  std::size_t rows = W.rows(), cols = W.cols();
  spec.scale.resize(rows);
  spec.zero_point.resize(rows);
  std::vector<double> channel(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = W.row(r);
    channel.assign(wr, wr + cols);
    auto [s, z] = calibrate_minmax(channel, bw);
    spec.scale[r] = s;
    spec.zero_point[r] = z;
  }
  return spec;
}

std::int32_t nearest_code(double w, double s, double z, int num_levels) {
  double q = round_half_away(w / s + z);
  double hi = static_cast<double>(num_levels - 1);
  q = std::max(0.0, std::min(q, hi));
  return static_cast<std::int32_t>(q);
}

QuantizedLayer quantize_uaq(const Tensor& W, const QuantSpec& spec) {
  std::size_t rows = W.rows(), cols = W.cols();
  if (spec.channels() != rows) {
    throw ArgumentError("quantize_uaq: spec has " +
                        std::to_string(spec.channels()) + " channels, weight has " +
                        std::to_string(rows) + " rows");
  }
  int L = levels(spec.bitwidth);
  QuantizedLayer out;
  out.channels = rows;
  out.width = cols;
  out.spec = spec;
  out.codes.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = spec.scale[r];
    double z = spec.zero_point[r];
    const double* wr = W.row(r);
    for (std::size_t c = 0; c < cols; ++c) {
      out.codes[r * cols + c] = nearest_code(wr[c], s, z, L);
    }
  }
  return out;
}

Tensor dequantize(const QuantizedLayer& q) {
  int L = levels(q.spec.bitwidth);
  Tensor out = Tensor::matrix(q.channels, q.width);
  for (std::size_t r = 0; r < q.channels; ++r) {
    double s = q.spec.scale[r];
    double z = q.spec.zero_point[r];
    for (std::size_t c = 0; c < q.width; ++c) {
      std::int32_t code = q.codes[r * q.width + c];
      if (code < 0 || code >= L) {
        throw IntegrityError("dequantize: code " + std::to_string(code) +
                             " outside [0, " + std::to_string(L - 1) + "]");
      }
      out.at(r, c) = s * (static_cast<double>(code) - z);
    }
  }
  return out;
}

QuantizedLayer sign_quantize(const Tensor& W) {
  std::size_t rows = W.rows(), cols = W.cols();
  QuantizedLayer out;
  out.channels = rows;
  out.width = cols;
  out.spec.bitwidth = BitWidth::B1;
  out.spec.scale.resize(rows);
  out.spec.zero_point.assign(rows, 0.5);
  out.codes.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = W.row(r);
    double mag = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mag += std::fabs(wr[c]);
    mag /= static_cast<double>(cols);
    if (mag < kScaleFloor) mag = kScaleFloor;
    // Grid {-mag, +mag} in affine form: scale 2*mag, zero_point 0.5.
    out.spec.scale[r] = 2.0 * mag;
    for (std::size_t c = 0; c < cols; ++c) {
      out.codes[r * cols + c] = wr[c] >= 0.0 ? 1 : 0;
    }
  }
  return out;
}

}  // namespace bitleak
