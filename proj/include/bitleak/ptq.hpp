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

#ifndef BITLEAK_PTQ_HPP
#define BITLEAK_PTQ_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bitleak/dataset.hpp"
#include "bitleak/network.hpp"
#include "bitleak/quantgrid.hpp"

namespace bitleak {

// Bit-width assignment: one default plus per-layer overrides, which is how
// the last layer gets decoupled to higher precision.
struct PrecisionMap {
  BitWidth default_bits = BitWidth::Full;
  std::map<std::string, BitWidth> overrides;

  BitWidth for_layer(const std::string& name) const;
  // Every override must name an existing Affine layer.
  void validate(const Network& net) const;
};

// Returns pmap with the network's final Affine layer overridden to
// last_bits.
PrecisionMap decouple(const PrecisionMap& pmap, const Network& net,
                      BitWidth last_bits);

// Rounding-variable optimizer settings shared by AdaRound and BRECQ.
struct AdaRoundConfig {
  std::size_t iters = 2000;
  double lr = 1e-2;
  double lambda = 0.01;
  double beta_start = 20.0;
  double beta_end = 2.0;
  double zeta = 1.1;
  double gamma = -0.1;

  void validate() const;
};

// Ordered grouping of contiguous Affine layer names covering all Affine
// layers exactly once.
struct BlockPartition {
  std::vector<std::vector<std::string>> blocks;

  void validate(const Network& net) const;
};

// Pairs of consecutive Affine layers, last block a singleton when the count
// is odd. For the standard template this is {(affine1, affine2), (affine3)}.
BlockPartition default_partition(const Network& net);

// One Affine layer name per block: plain layer-wise AdaRound.
BlockPartition singleton_partition(const Network& net);

// Calibration inputs plus the dataset indices they came from, so leakage
// can be checked structurally.
struct CalibrationSet {
  Tensor inputs;                       // [C x d]
  std::vector<std::size_t> provenance;  // indices into the dataset

  // Every provenance index must belong to the plan's training half.
  void check_no_leakage(const SplitPlan& plan) const;
};

// Gathers the plan's calibration rows from the dataset.
CalibrationSet make_calibration(const Dataset& ds, const SplitPlan& plan);

// A quantized network: dequantized weights installed in `net`, the exact
// code matrices per quantized Affine layer, and the precision map used.
struct QuantizedNetwork {
  Network net;
  std::map<std::string, QuantizedLayer> layers;
  PrecisionMap pmap;
};

// Round-to-nearest baseline. Min-max grid per output channel; B1 layers use
// the sign grid; Full layers and all biases stay untouched.
QuantizedNetwork rtn_quantize(const Network& net, const PrecisionMap& pmap);

// Learned rounding for one Affine layer. W is the weight matrix, inputs the
// cached calibration activations feeding the layer, spec the target grid.
// Every code differs from floor(W/s)+z by at most +1, the final calibration
// output MSE never exceeds round-to-nearest for the same spec, and all
// relaxed rounding variables end within 1e-2 of {0, 1}.
QuantizedLayer adaround_layer(const Tensor& W, const Tensor& inputs,
                              const QuantSpec& spec,
                              const AdaRoundConfig& cfg);

// Layer-wise AdaRound over the whole network: BRECQ with the singleton
// partition. Each layer sees activations from the already-quantized prefix.
QuantizedNetwork adaround_quantize(const Network& net,
                                   const CalibrationSet& calib,
                                   const PrecisionMap& pmap,
                                   const AdaRoundConfig& cfg);

// Block reconstruction: rounding variables of all layers in a block are
// optimized jointly against the block's output MSE, with the block input
// taken from the already-quantized prefix. Frozen batch-norm and ReLU
// layers between the block's Affine layers stay in the loss path.
QuantizedNetwork brecq_quantize(const Network& net,
                                const BlockPartition& partition,
                                const CalibrationSet& calib,
                                const PrecisionMap& pmap,
                                const AdaRoundConfig& cfg);

// Greedy per-weight quantization of one row with OBS compensation. H is the
// damped input Gram matrix shared by all rows of the layer.
struct ObcRowResult {
  std::vector<double> values;       // final weights, all on the grid
  std::vector<std::int32_t> codes;
  std::vector<std::size_t> order;   // indices in quantization order
  std::vector<std::vector<double>> w_after_step;  // row state after each step
};
ObcRowResult obc_quantize_row(const std::vector<double>& w, const Tensor& H,
                              double scale, double zero_point,
                              int num_levels);

// Damped Hessian for obc_quantize_row: H = 2 X^T X + delta I with
// delta = 1e-2 * mean(diag(2 X^T X)), X the [C x n] calibration activations.
Tensor obc_hessian(const Tensor& inputs);

// OBC over every Affine layer, row by row, using each layer's cached
// full-precision calibration activations; batch-norm statistics are
// re-tuned on the calibration set afterwards.
QuantizedNetwork obc_quantize(const Network& net, const CalibrationSet& calib,
                              const PrecisionMap& pmap);

// Sum of squared differences between the layer outputs of two weight
// matrices on the given inputs: ||X (A - B)^T||_F^2.
double layer_output_mse(const Tensor& A, const Tensor& B, const Tensor& inputs);

// The four quantization procedures under one name for the runner.
enum class Method { RTN, AdaRound, BRECQ, OBC };
std::string method_label(Method m);
Method method_from_label(const std::string& label);

QuantizedNetwork quantize_network(const Network& net, Method method,
                                  const CalibrationSet& calib,
                                  const PrecisionMap& pmap,
                                  const AdaRoundConfig& cfg);

}  // namespace bitleak

#endif  // BITLEAK_PTQ_HPP
