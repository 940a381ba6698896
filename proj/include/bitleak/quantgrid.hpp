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

#ifndef BITLEAK_QUANTGRID_HPP
#define BITLEAK_QUANTGRID_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bitleak/tensor.hpp"

namespace bitleak {

// Grid sizes. B158 is the 3-level ternary grid (log2 3 = 1.58 bits); Full
// means no quantization.
enum class BitWidth { B1, B158, B2, B4, B8, Full };

// Number of representable levels; 0 for Full.
int levels(BitWidth bw);

// Canonical lower-case label used in configs, file names and CSV columns.
std::string bitwidth_label(BitWidth bw);

// Inverse of bitwidth_label; unknown labels raise ConfigError.
BitWidth bitwidth_from_label(const std::string& label);

// Per-channel uniform affine grid: channel c represents the values
// {scale[c] * (q - zero_point[c]) : q in 0..levels-1}. The channel axis is
// the output-row axis of an affine weight matrix.
//
// zero_point is integer-valued for min-max calibrated grids and lands in
// [0, levels-1] whenever a channel straddles zero. It is stored as a double
// because two supported grids step outside integer range:
//   - sign quantization uses zero_point 0.5 so the 2-level grid is {-s, +s};
//   - constant channels keep the scale floor 1e-12 and an unclamped
//     zero_point so the single represented value stays at the channel value
//     instead of collapsing to ~0.
struct QuantSpec {
  BitWidth bitwidth = BitWidth::Full;
  std::vector<double> scale;
  std::vector<double> zero_point;

  std::size_t channels() const { return scale.size(); }
};

// Integer codes plus the grid that decodes them. dequantize(codes, spec)
// reproduces exactly the values used at inference; nothing re-rounds later.
struct QuantizedLayer {
  std::vector<std::int32_t> codes;  // row-major [channels x width]
  std::size_t channels = 0;
  std::size_t width = 0;
  QuantSpec spec;

  std::int32_t code(std::size_t r, std::size_t c) const {
    return codes[r * width + c];
  }
};

// max(lo, min(a, hi)); lo > hi raises ArgumentError.
double clamp(double a, double lo, double hi);

// Round half away from zero. The rounding used everywhere a real value maps
// to a grid code, fixed so .5 cases are unambiguous.
inline double round_half_away(double x) { return std::round(x); }

// Min-max scale and zero-point for one channel:
//   s = (max - min) / (levels - 1), floored at 1e-12 for constant channels;
//   z = round(-min / s).
// The resulting grid covers [min, max] and contains 0 whenever the channel
// straddles zero.
std::pair<double, double> calibrate_minmax(const std::vector<double>& channel,
                                           BitWidth bw);

// QuantSpec with one min-max grid per output row of W. B1 requests the sign
// grid (see sign_quantize); Full is an error since there is nothing to build.
QuantSpec calibrate_layer(const Tensor& W, BitWidth bw);

// Nearest grid code for one value: clamp(round(w/s + z), 0, levels-1).
// For integer z this equals clamp(round(w/s) + z, 0, levels-1).
std::int32_t nearest_code(double w, double s, double z, int num_levels);

// codes = clamp(round(W/s) + z, 0, levels-1) per channel; |W - What| <= s/2
// for any entry whose code did not saturate.
QuantizedLayer quantize_uaq(const Tensor& W, const QuantSpec& spec);

// What = s * (codes - z). Codes outside [0, levels-1] raise IntegrityError.
Tensor dequantize(const QuantizedLayer& q);

// 1-bit sign grid: per channel s = mean(|W|), represented values {-s, +s},
// code 1 where W >= 0 else 0. Stored as a 2-level affine grid with scale 2s
// and zero_point 0.5.
QuantizedLayer sign_quantize(const Tensor& W);

}  // namespace bitleak

#endif  // BITLEAK_QUANTGRID_HPP
