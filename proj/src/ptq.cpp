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

#include "bitleak/ptq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bitleak/error.hpp"
#include "bitleak/rng.hpp"

namespace bitleak {

namespace {

// Rounding variables are declared converged when within this distance of
// {0, 1}; stragglers after the hardening tail are snapped.
constexpr double kRoundingTol = 1e-2;
// Calibration minibatch size for multi-layer block reconstruction. Single
// layer optimization uses the precomputed Gram matrix and is always
// full-batch.
constexpr std::size_t kBlockBatch = 64;
constexpr std::uint64_t kBlockRngSeed = 0xB10CBA7C;

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Linear anneal of beta: held at beta_start for the first third of the
// budget, then decayed to beta_end by the final iteration.
double anneal_beta(std::size_t t, std::size_t total,
                   const AdaRoundConfig& cfg) {
  std::size_t warm = total / 3;
  if (t < warm || total <= warm + 1) return cfg.beta_start;
  double frac = static_cast<double>(t - warm) /
                static_cast<double>(total - 1 - warm);
  return cfg.beta_start + (cfg.beta_end - cfg.beta_start) * frac;
}

// d(1 - |2h-1|^beta)/dh.
double reg_grad(double h, double beta) {
  double u = 2.0 * h - 1.0;
  double au = std::fabs(u);
  if (au == 0.0) return 0.0;
  return -2.0 * beta * std::pow(au, beta - 1.0) * (u > 0.0 ? 1.0 : -1.0);
}

double reg_value(double h, double beta) {
  return 1.0 - std::pow(std::fabs(2.0 * h - 1.0), beta);
}

// Adam on the rounding logits. Plain gradient steps stall here: at the
// spec'd init the soft weights reproduce W exactly (zero data gradient) and
// the annealed regularizer is plateaued for mid-range h, so nothing moves at
// the published constants. Adam's per-parameter normalization keeps the
// update magnitude at lr even when the raw gradient is tiny, which is what
// the cited rounding method relies on.
struct AdamState {
  static constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8;
  Tensor m, v;
  double bc1 = 1.0, bc2 = 1.0;  // bias corrections for the current iteration
  double pow1 = 1.0, pow2 = 1.0;

  void init(std::size_t rows, std::size_t cols) {
    m = Tensor::matrix(rows, cols);
    v = Tensor::matrix(rows, cols);
    bc1 = bc2 = pow1 = pow2 = 1.0;
  }
  // Call once per optimizer iteration, before stepping elements.
  void advance() {
    pow1 *= kB1;
    pow2 *= kB2;
    bc1 = 1.0 - pow1;
    bc2 = 1.0 - pow2;
  }
  // Returns the normalized step for raw gradient g at element i.
  double step(std::size_t i, double g) {
    m.values[i] = kB1 * m.values[i] + (1.0 - kB1) * g;
    v.values[i] = kB2 * v.values[i] + (1.0 - kB2) * g * g;
    return (m.values[i] / bc1) / (std::sqrt(v.values[i] / bc2) + kEps);
  }
};

// Per-weight state of the rectified-sigmoid relaxation.
struct RoundingVars {
  Tensor base;  // floor(w/s + z), exact integers stored as doubles
  Tensor V;     // logits; h(V) = clip(sigmoid(V)(zeta-gamma)+gamma, 0, 1)
};

RoundingVars init_rounding(const Tensor& W, const QuantSpec& spec,
                           const AdaRoundConfig& cfg) {
  RoundingVars rv;
  rv.base = Tensor::matrix(W.rows(), W.cols());
  rv.V = Tensor::matrix(W.rows(), W.cols());
  double span = cfg.zeta - cfg.gamma;
  for (std::size_t r = 0; r < W.rows(); ++r) {
    double s = spec.scale[r];
    double z = spec.zero_point[r];
    for (std::size_t c = 0; c < W.cols(); ++c) {
      double pos = W.at(r, c) / s + z;
      double fl = std::floor(pos);
      double frac = pos - fl;
      rv.base.at(r, c) = fl;
      // h(V) = frac at init; frac in [0,1) keeps the sigmoid argument finite.
      double p = (frac - cfg.gamma) / span;
      p = std::min(std::max(p, 1e-9), 1.0 - 1e-9);
      rv.V.at(r, c) = std::log(p / (1.0 - p));
    }
  }
  return rv;
}

double rectified_h(double v, const AdaRoundConfig& cfg) {
  double h = sigmoid(v) * (cfg.zeta - cfg.gamma) + cfg.gamma;
  return std::min(1.0, std::max(0.0, h));
}

// Soft-quantized weights for the current V. unclamped[rc]=1 where the soft
// code is interior, so gradients flow.
void soft_weights(const Tensor& W, const QuantSpec& spec,
                  const RoundingVars& rv, const AdaRoundConfig& cfg,
                  Tensor& What, Tensor& hmat, Tensor& unclamped) {
  int L = levels(spec.bitwidth);
  double hi = static_cast<double>(L - 1);
  for (std::size_t r = 0; r < W.rows(); ++r) {
    double s = spec.scale[r];
    double z = spec.zero_point[r];
    for (std::size_t c = 0; c < W.cols(); ++c) {
      double h = rectified_h(rv.V.at(r, c), cfg);
      double code = rv.base.at(r, c) + h;
      double clamped = std::min(std::max(code, 0.0), hi);
      hmat.at(r, c) = h;
      unclamped.at(r, c) = (code == clamped) ? 1.0 : 0.0;
      What.at(r, c) = s * (clamped - z);
    }
  }
}

// Gradient of h w.r.t. V; zero where the rectified sigmoid saturates.
double dh_dv(double v, const AdaRoundConfig& cfg) {
  double span = cfg.zeta - cfg.gamma;
  double sg = sigmoid(v);
  double raw = sg * span + cfg.gamma;
  if (raw <= 0.0 || raw >= 1.0) return 0.0;
  return sg * (1.0 - sg) * span;
}

QuantizedLayer harden(const Tensor& W, const QuantSpec& spec,
                      const RoundingVars& rv, const AdaRoundConfig& cfg) {
  int L = levels(spec.bitwidth);
  QuantizedLayer out;
  out.channels = W.rows();
  out.width = W.cols();
  out.spec = spec;
  out.codes.resize(W.size());
  for (std::size_t r = 0; r < W.rows(); ++r) {
    for (std::size_t c = 0; c < W.cols(); ++c) {
      double h = rectified_h(rv.V.at(r, c), cfg);
      double code = rv.base.at(r, c) + (h >= 0.5 ? 1.0 : 0.0);
      code = std::min(std::max(code, 0.0), static_cast<double>(L - 1));
      out.codes[r * out.width + c] = static_cast<std::int32_t>(code);
    }
  }
  return out;
}

// Push stragglers toward {0,1}: a short tail with boosted regularizer and
// final beta, then snap anything still ambiguous toward its nearest side.
// Afterwards every h is within kRoundingTol of {0,1}.
void saturate_rounding(RoundingVars& rv, const AdaRoundConfig& cfg) {
  auto count_stragglers = [&]() {
    std::size_t n = 0;
    for (double v : rv.V.values) {
      double h = rectified_h(v, cfg);
      if (h > kRoundingTol && h < 1.0 - kRoundingTol) ++n;
    }
    return n;
  };
  if (count_stragglers() > 0) {
    std::size_t tail = std::max<std::size_t>(100, cfg.iters / 10);
    double boosted = cfg.lambda * 10.0;
    for (std::size_t t = 0; t < tail; ++t) {
      for (double& v : rv.V.values) {
        double g = boosted * reg_grad(rectified_h(v, cfg), cfg.beta_end) *
                   dh_dv(v, cfg);
        v -= cfg.lr * g;
      }
    }
  }
  if (count_stragglers() > 0) {
    // Snap: set V far into the saturated zone of the chosen side.
    for (double& v : rv.V.values) {
      double h = rectified_h(v, cfg);
      if (h > kRoundingTol && h < 1.0 - kRoundingTol) {
        v = h >= 0.5 ? 40.0 : -40.0;
      }
    }
  }
}

double quant_mse_gram(const Tensor& W, const QuantizedLayer& q,
                      const Tensor& G) {
  Tensor What = dequantize(q);
  for (std::size_t i = 0; i < What.values.size(); ++i) {
    What.values[i] -= W.values[i];
  }
  Tensor DG = matmul(What, G);
  double total = 0.0;
  for (std::size_t i = 0; i < What.values.size(); ++i) {
    total += DG.values[i] * What.values[i];
  }
  return total;
}

// Frozen inference transform of a batch-norm layer: y = a x + shift.
struct FrozenBatchNorm {
  std::vector<double> a, shift;
};

FrozenBatchNorm freeze_batchnorm(const Layer& l) {
  FrozenBatchNorm f;
  std::size_t width = l.gamma.size();
  f.a.resize(width);
  f.shift.resize(width);
  for (std::size_t j = 0; j < width; ++j) {
    double inv_std = 1.0 / std::sqrt(l.running_var[j] + kBatchNormEps);
    f.a[j] = l.gamma[j] * inv_std;
    f.shift[j] = l.beta[j] - l.running_mean[j] * f.a[j];
  }
  return f;
}

}  // namespace

BitWidth PrecisionMap::for_layer(const std::string& name) const {
  auto it = overrides.find(name);
  return it == overrides.end() ? default_bits : it->second;
}

void PrecisionMap::validate(const Network& net) const {
  for (const auto& [name, bits] : overrides) {
    if (!net.has_layer(name)) {
      throw ConfigError("precision map override names unknown layer '" + name +
                        "'");
    }
    if (net.layer(name).kind != LayerKind::Affine) {
      throw ConfigError("precision map override '" + name +
                        "' is not an affine layer");
    }
    (void)bits;
  }
}

PrecisionMap decouple(const PrecisionMap& pmap, const Network& net,
                      BitWidth last_bits) {
  PrecisionMap out = pmap;
  out.overrides[net.last_affine_name()] = last_bits;
  return out;
}

void AdaRoundConfig::validate() const {
  if (!(zeta > 1.0)) throw ArgumentError("adaround: zeta must exceed 1");
  if (!(gamma < 0.0)) throw ArgumentError("adaround: gamma must be negative");
  if (!(beta_start >= beta_end && beta_end >= 2.0)) {
    throw ArgumentError("adaround: need beta_start >= beta_end >= 2");
  }
  if (!(lr > 0.0)) throw ArgumentError("adaround: lr must be positive");
  if (lambda < 0.0) throw ArgumentError("adaround: lambda must be >= 0");
  if (iters == 0) throw ArgumentError("adaround: iters must be >= 1");
}

void BlockPartition::validate(const Network& net) const {
  std::vector<std::string> flattened;
  for (const auto& block : blocks) {
    if (block.empty()) throw ConfigError("block partition: empty block");
    for (const std::string& name : block) flattened.push_back(name);
  }
  std::vector<std::string> expected;
  for (std::size_t li : net.affine_indices()) {
    expected.push_back(net.layers[li].name);
  }
  if (flattened != expected) {
    throw ConfigError(
        "block partition must cover all affine layers exactly once, "
        "contiguously and in network order");
  }
}

BlockPartition default_partition(const Network& net) {
  std::vector<std::string> names;
  for (std::size_t li : net.affine_indices()) {
    names.push_back(net.layers[li].name);
  }
  BlockPartition part;
  for (std::size_t i = 0; i < names.size(); i += 2) {
    std::vector<std::string> block;
    block.push_back(names[i]);
    if (i + 1 < names.size()) block.push_back(names[i + 1]);
    part.blocks.push_back(block);
  }
  part.validate(net);
  return part;
}

BlockPartition singleton_partition(const Network& net) {
  BlockPartition part;
  for (std::size_t li : net.affine_indices()) {
    part.blocks.push_back({net.layers[li].name});
  }
  part.validate(net);
  return part;
}

void CalibrationSet::check_no_leakage(const SplitPlan& plan) const {
  for (std::size_t idx : provenance) {
    if (!plan.is_member(idx)) {
      throw IntegrityError(
          "calibration index " + std::to_string(idx) +
          " is outside the target training split (leakage)");
    }
  }
}

CalibrationSet make_calibration(const Dataset& ds, const SplitPlan& plan) {
  plan.validate();
  CalibrationSet calib;
  calib.provenance = plan.calibration;
  calib.inputs = ds.subset(plan.calibration).inputs;
  calib.check_no_leakage(plan);
  return calib;
}

QuantizedNetwork rtn_quantize(const Network& net, const PrecisionMap& pmap) {
  net.validate();
  pmap.validate(net);
  QuantizedNetwork out;
  out.net = net;
  out.pmap = pmap;
  for (std::size_t li : net.affine_indices()) {
    Layer& layer = out.net.layers[li];
    BitWidth bw = pmap.for_layer(layer.name);
    if (bw == BitWidth::Full) continue;
    QuantizedLayer q;
    if (bw == BitWidth::B1) {
      q = sign_quantize(layer.W);
    } else {
      q = quantize_uaq(layer.W, calibrate_layer(layer.W, bw));
    }
    layer.W = dequantize(q);
    out.layers.emplace(layer.name, std::move(q));
  }
  return out;
}

QuantizedLayer adaround_layer(const Tensor& W, const Tensor& inputs,
                              const QuantSpec& spec,
                              const AdaRoundConfig& cfg) {
  cfg.validate();
  W.require_2d();
  inputs.require_2d();
  if (inputs.cols() != W.cols()) {
    throw ShapeError("adaround_layer: input width does not match weights");
  }
  if (spec.channels() != W.rows()) {
    throw ArgumentError("adaround_layer: spec channel count mismatch");
  }
  // G = X^T X / N turns the mean-over-rows layer-output error
  // ||X (What - W)^T||_F^2 / N into tr(Delta G Delta^T); the data gradient
  // is then 2 Delta G per iteration with no per-sample work. The 1/N keeps
  // the data term on the published scale relative to lambda, so the
  // regularizer can still drive rounding decisions at large calibration
  // sets.
  Tensor G = matmul_at(inputs, inputs);
  for (double& g : G.values) g /= static_cast<double>(inputs.rows());

  RoundingVars rv = init_rounding(W, spec, cfg);
  Tensor What = Tensor::matrix(W.rows(), W.cols());
  Tensor hmat = Tensor::matrix(W.rows(), W.cols());
  Tensor unclamped = Tensor::matrix(W.rows(), W.cols());
  Tensor delta = Tensor::matrix(W.rows(), W.cols());
  Tensor DG;
  AdamState adam;
  adam.init(W.rows(), W.cols());

  for (std::size_t t = 0; t < cfg.iters; ++t) {
    double beta = anneal_beta(t, cfg.iters, cfg);
    soft_weights(W, spec, rv, cfg, What, hmat, unclamped);
    for (std::size_t i = 0; i < delta.values.size(); ++i) {
      delta.values[i] = What.values[i] - W.values[i];
    }
    matmul_into(delta, G, DG);

    double loss = 0.0;
    adam.advance();
    for (std::size_t r = 0; r < W.rows(); ++r) {
      double s = spec.scale[r];
      for (std::size_t c = 0; c < W.cols(); ++c) {
        std::size_t i = r * W.cols() + c;
        loss += DG.values[i] * delta.values[i];
        double g_data = 2.0 * DG.values[i] * s * unclamped.values[i];
        double g_reg = cfg.lambda * reg_grad(hmat.values[i], beta);
        double g = (g_data + g_reg) * dh_dv(rv.V.values[i], cfg);
        rv.V.values[i] -= cfg.lr * adam.step(i, g);
        loss += cfg.lambda * reg_value(hmat.values[i], beta);
      }
    }
    if (!std::isfinite(loss)) {
      throw OptimizationError("adaround loss diverged", t);
    }
  }

  saturate_rounding(rv, cfg);
  QuantizedLayer learned = harden(W, spec, rv, cfg);
  QuantizedLayer rtn = quantize_uaq(W, spec);
  // Keep whichever rounding reconstructs the calibration output better;
  // guarantees the learned result never loses to round-to-nearest.
  double mse_learned = quant_mse_gram(W, learned, G);
  double mse_rtn = quant_mse_gram(W, rtn, G);
  return mse_learned <= mse_rtn ? learned : rtn;
}

namespace {

// One Affine layer being optimized inside a block.
struct BlockLayer {
  std::size_t layer_index = 0;
  bool quantized = false;  // false = pmap says Full, weights frozen
  QuantSpec spec;
  RoundingVars rv;
  AdamState adam;
  Tensor What, hmat, unclamped;
};

// Multi-layer block reconstruction. Layers in [first_li, last_li] of the
// network are walked per iteration; frozen batch-norm and ReLU transforms
// participate in both the reference and the optimized path. The reference
// output y_ref is the full-precision block applied to the same (already
// quantized prefix) input x_block.
void optimize_block(const Network& net, std::size_t first_li,
                    std::size_t last_li, std::vector<BlockLayer>& bls,
                    const Tensor& x_block, const AdaRoundConfig& cfg,
                    std::uint64_t rng_stream) {
  // Reference: full-precision forward over the block.
  std::vector<FrozenBatchNorm> frozen(net.layers.size());
  for (std::size_t li = first_li; li <= last_li; ++li) {
    if (net.layers[li].kind == LayerKind::BatchNorm) {
      frozen[li] = freeze_batchnorm(net.layers[li]);
    }
  }
  auto forward_fp = [&](const Tensor& x) {
    Tensor h = x;
    for (std::size_t li = first_li; li <= last_li; ++li) {
      const Layer& l = net.layers[li];
      switch (l.kind) {
        case LayerKind::Affine: {
          Tensor y = matmul_bt(h, l.W);
          for (std::size_t i = 0; i < y.rows(); ++i) {
            for (std::size_t j = 0; j < y.cols(); ++j) y.at(i, j) += l.b[j];
          }
          h = std::move(y);
          break;
        }
        case LayerKind::BatchNorm:
          for (std::size_t i = 0; i < h.rows(); ++i) {
            double* row = h.row(i);
            for (std::size_t j = 0; j < h.cols(); ++j) {
              row[j] = frozen[li].a[j] * row[j] + frozen[li].shift[j];
            }
          }
          break;
        case LayerKind::ReLU:
          for (double& v : h.values) v = std::max(0.0, v);
          break;
        case LayerKind::Softmax:
          throw StateError("optimize_block: softmax inside a block");
      }
    }
    return h;
  };
  Tensor y_ref_full = forward_fp(x_block);

  std::size_t C = x_block.rows();
  std::size_t batch = C > kBlockBatch ? kBlockBatch : C;
  std::size_t chunks = C / batch;

  std::vector<std::size_t> perm(C);
  for (std::size_t i = 0; i < C; ++i) perm[i] = i;
  std::size_t perm_epoch = static_cast<std::size_t>(-1);

  std::map<std::size_t, BlockLayer*> by_index;
  for (BlockLayer& bl : bls) by_index[bl.layer_index] = &bl;

  for (std::size_t t = 0; t < cfg.iters; ++t) {
    double beta = anneal_beta(t, cfg.iters, cfg);

    // Deterministic minibatch schedule: a fresh permutation per pass over
    // the calibration set, consumed in contiguous chunks.
    std::size_t chunk = t % chunks;
    std::size_t epoch = t / chunks;
    if (chunks > 1 && epoch != perm_epoch) {
      Rng rng(kBlockRngSeed, Rng::mix2(rng_stream, epoch));
      for (std::size_t i = 0; i < C; ++i) perm[i] = i;
      rng.shuffle(perm);
      perm_epoch = epoch;
    }

    Tensor x_batch = Tensor::matrix(batch, x_block.cols());
    Tensor y_ref = Tensor::matrix(batch, y_ref_full.cols());
    for (std::size_t i = 0; i < batch; ++i) {
      std::size_t src = chunks > 1 ? perm[chunk * batch + i] : i;
      std::copy(x_block.row(src), x_block.row(src) + x_block.cols(),
                x_batch.row(i));
      std::copy(y_ref_full.row(src), y_ref_full.row(src) + y_ref_full.cols(),
                y_ref.row(i));
    }

    for (BlockLayer& bl : bls) {
      if (!bl.quantized) continue;
      const Layer& l = net.layers[bl.layer_index];
      soft_weights(l.W, bl.spec, bl.rv, cfg, bl.What, bl.hmat, bl.unclamped);
      bl.adam.advance();
    }

    // Forward, keeping the input of every sub-layer for backprop.
    std::vector<Tensor> acts(last_li - first_li + 2);
    acts[0] = x_batch;
    Tensor h = x_batch;
    for (std::size_t li = first_li; li <= last_li; ++li) {
      const Layer& l = net.layers[li];
      switch (l.kind) {
        case LayerKind::Affine: {
          const Tensor& Weff =
              by_index.count(li) && by_index[li]->quantized
                  ? by_index[li]->What
                  : l.W;
          Tensor y = matmul_bt(h, Weff);
          for (std::size_t i = 0; i < y.rows(); ++i) {
            for (std::size_t j = 0; j < y.cols(); ++j) y.at(i, j) += l.b[j];
          }
          h = std::move(y);
          break;
        }
        case LayerKind::BatchNorm:
          for (std::size_t i = 0; i < h.rows(); ++i) {
            double* row = h.row(i);
            for (std::size_t j = 0; j < h.cols(); ++j) {
              row[j] = frozen[li].a[j] * row[j] + frozen[li].shift[j];
            }
          }
          break;
        case LayerKind::ReLU:
          for (double& v : h.values) v = std::max(0.0, v);
          break;
        case LayerKind::Softmax:
          throw StateError("optimize_block: softmax inside a block");
      }
      acts[li - first_li + 1] = h;
    }

    // Reconstruction error is averaged over the minibatch rows (summed over
    // width), matching the scale the lambda default was published for.
    double loss = 0.0;
    double inv_rows = 1.0 / static_cast<double>(batch);
    Tensor delta = h;
    for (std::size_t i = 0; i < delta.values.size(); ++i) {
      double d = delta.values[i] - y_ref.values[i];
      loss += d * d * inv_rows;
      delta.values[i] = 2.0 * d * inv_rows;
    }
    if (!std::isfinite(loss)) {
      throw OptimizationError("block reconstruction loss diverged", t);
    }

    // Backward through the block, updating V of each quantized layer.
    for (std::size_t li = last_li + 1; li-- > first_li;) {
      const Layer& l = net.layers[li];
      const Tensor& x_in = acts[li - first_li];
      switch (l.kind) {
        case LayerKind::Affine: {
          BlockLayer* bl =
              by_index.count(li) ? by_index[li] : nullptr;
          const Tensor& Weff =
              bl && bl->quantized ? bl->What : l.W;
          if (bl && bl->quantized) {
            Tensor dW = matmul_at(delta, x_in);
            for (std::size_t r = 0; r < dW.rows(); ++r) {
              double s = bl->spec.scale[r];
              for (std::size_t c = 0; c < dW.cols(); ++c) {
                std::size_t i = r * dW.cols() + c;
                double g = (dW.values[i] * s * bl->unclamped.values[i] +
                            cfg.lambda * reg_grad(bl->hmat.values[i], beta)) *
                           dh_dv(bl->rv.V.values[i], cfg);
                bl->rv.V.values[i] -= cfg.lr * bl->adam.step(i, g);
              }
            }
          }
          if (li != first_li) delta = matmul(delta, Weff);
          break;
        }
        case LayerKind::BatchNorm:
          for (std::size_t i = 0; i < delta.rows(); ++i) {
            double* dr = delta.row(i);
            for (std::size_t j = 0; j < delta.cols(); ++j) {
              dr[j] *= frozen[li].a[j];
            }
          }
          break;
        case LayerKind::ReLU:
          for (std::size_t i = 0; i < delta.rows(); ++i) {
            const double* xr = x_in.row(i);
            double* dr = delta.row(i);
            for (std::size_t j = 0; j < delta.cols(); ++j) {
              if (xr[j] <= 0.0) dr[j] = 0.0;
            }
          }
          break;
        case LayerKind::Softmax:
          break;
      }
    }

  }
}

// Inference walk over layers [first_li, last_li], substituting dequantized
// weights for any affine named in `codes`. Batch norm uses running stats.
Tensor block_forward(const Network& net, std::size_t first_li,
                     std::size_t last_li,
                     const std::map<std::string, QuantizedLayer>& codes,
                     const Tensor& x_block) {
  Tensor h = x_block;
  for (std::size_t li = first_li; li <= last_li; ++li) {
    const Layer& l = net.layers[li];
    switch (l.kind) {
      case LayerKind::Affine: {
        Tensor Weff = codes.count(l.name) ? dequantize(codes.at(l.name)) : l.W;
        Tensor y = matmul_bt(h, Weff);
        for (std::size_t i = 0; i < y.rows(); ++i) {
          for (std::size_t j = 0; j < y.cols(); ++j) y.at(i, j) += l.b[j];
        }
        h = std::move(y);
        break;
      }
      case LayerKind::BatchNorm: {
        FrozenBatchNorm f = freeze_batchnorm(l);
        for (std::size_t i = 0; i < h.rows(); ++i) {
          double* row = h.row(i);
          for (std::size_t j = 0; j < h.cols(); ++j) {
            row[j] = f.a[j] * row[j] + f.shift[j];
          }
        }
        break;
      }
      case LayerKind::ReLU:
        for (double& v : h.values) v = std::max(0.0, v);
        break;
      case LayerKind::Softmax:
        throw StateError("block_forward: softmax inside a block");
    }
  }
  return h;
}

double block_mse(const Network& net, std::size_t first_li, std::size_t last_li,
                 const std::map<std::string, QuantizedLayer>& codes,
                 const Tensor& x_block, const Tensor& y_ref) {
  Tensor h = block_forward(net, first_li, last_li, codes, x_block);
  double total = 0.0;
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    double d = h.values[i] - y_ref.values[i];
    total += d * d;
  }
  return total;
}

}  // namespace

QuantizedNetwork brecq_quantize(const Network& net,
                                const BlockPartition& partition,
                                const CalibrationSet& calib,
                                const PrecisionMap& pmap,
                                const AdaRoundConfig& cfg) {
  net.validate();
  partition.validate(net);
  pmap.validate(net);
  cfg.validate();

  QuantizedNetwork out;
  out.net = net;
  out.pmap = pmap;

  // x_q: calibration activations through the already-quantized prefix,
  // currently positioned at the input of `cursor`.
  Tensor x_q = calib.inputs;
  std::size_t cursor = 0;

  auto advance = [&](std::size_t stop_before) {
    for (; cursor < stop_before; ++cursor) {
      const Layer& l = out.net.layers[cursor];
      switch (l.kind) {
        case LayerKind::Affine: {
          Tensor y = matmul_bt(x_q, l.W);
          for (std::size_t i = 0; i < y.rows(); ++i) {
            for (std::size_t j = 0; j < y.cols(); ++j) y.at(i, j) += l.b[j];
          }
          x_q = std::move(y);
          break;
        }
        case LayerKind::BatchNorm: {
          FrozenBatchNorm f = freeze_batchnorm(l);
          for (std::size_t i = 0; i < x_q.rows(); ++i) {
            double* row = x_q.row(i);
            for (std::size_t j = 0; j < x_q.cols(); ++j) {
              row[j] = f.a[j] * row[j] + f.shift[j];
            }
          }
          break;
        }
        case LayerKind::ReLU:
          for (double& v : x_q.values) v = std::max(0.0, v);
          break;
        case LayerKind::Softmax:
          ++cursor;
          return;  // nothing depends on activations past the softmax
      }
    }
  };

  for (std::size_t b = 0; b < partition.blocks.size(); ++b) {
    const auto& names = partition.blocks[b];
    std::size_t first_li = 0, last_li = 0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
      if (net.layers[li].name == names.front()) first_li = li;
      if (net.layers[li].name == names.back()) last_li = li;
    }
    advance(first_li);

    bool any_quantized = false;
    for (const std::string& name : names) {
      if (pmap.for_layer(name) != BitWidth::Full) any_quantized = true;
    }

    if (any_quantized && names.size() == 1) {
      // Singleton block: the layer-wise path with the exact Gram objective.
      Layer& layer = out.net.layer(names.front());
      BitWidth bw = pmap.for_layer(names.front());
      QuantSpec spec = calibrate_layer(layer.W, bw);
      QuantizedLayer q = adaround_layer(layer.W, x_q, spec, cfg);
      layer.W = dequantize(q);
      out.layers.emplace(names.front(), std::move(q));
    } else if (any_quantized) {
      std::vector<BlockLayer> bls;
      for (const std::string& name : names) {
        BlockLayer bl;
        for (std::size_t li = first_li; li <= last_li; ++li) {
          if (net.layers[li].name == name) bl.layer_index = li;
        }
        const Layer& l = net.layers[bl.layer_index];
        BitWidth bw = pmap.for_layer(name);
        bl.quantized = bw != BitWidth::Full;
        if (bl.quantized) {
          bl.spec = calibrate_layer(l.W, bw);
          bl.rv = init_rounding(l.W, bl.spec, cfg);
          bl.adam.init(l.W.rows(), l.W.cols());
          bl.What = Tensor::matrix(l.W.rows(), l.W.cols());
          bl.hmat = Tensor::matrix(l.W.rows(), l.W.cols());
          bl.unclamped = Tensor::matrix(l.W.rows(), l.W.cols());
        }
        bls.push_back(std::move(bl));
      }
      // The block's own weights are still full precision here; only the
      // prefix (through x_q) is quantized, so `net` provides both the
      // reference path and the weights being rounded.
      optimize_block(net, first_li, last_li, bls, x_q, cfg, first_li);

      std::map<std::string, QuantizedLayer> learned, rtn;
      for (BlockLayer& bl : bls) {
        if (!bl.quantized) continue;
        const Layer& l = net.layers[bl.layer_index];
        saturate_rounding(bl.rv, cfg);
        learned.emplace(l.name, harden(l.W, bl.spec, bl.rv, cfg));
        rtn.emplace(l.name, quantize_uaq(l.W, bl.spec));
      }
      Tensor y_ref = block_forward(net, first_li, last_li, {}, x_q);
      double mse_learned =
          block_mse(net, first_li, last_li, learned, x_q, y_ref);
      double mse_rtn = block_mse(net, first_li, last_li, rtn, x_q, y_ref);
      const auto& chosen = mse_learned <= mse_rtn ? learned : rtn;
      for (const auto& [name, q] : chosen) {
        out.net.layer(name).W = dequantize(q);
        out.layers.emplace(name, q);
      }
    }
    // x_q stays at the block input; advance() before the next block walks
    // through the now-quantized weights.
  }
  return out;
}

QuantizedNetwork adaround_quantize(const Network& net,
                                   const CalibrationSet& calib,
                                   const PrecisionMap& pmap,
                                   const AdaRoundConfig& cfg) {
  return brecq_quantize(net, singleton_partition(net), calib, pmap, cfg);
}

Tensor obc_hessian(const Tensor& inputs) {
  inputs.require_2d();
  if (inputs.rows() == 0) {
    throw ArgumentError("obc_hessian: empty calibration inputs");
  }
  Tensor H = matmul_at(inputs, inputs);
  double trace = 0.0;
  std::size_t n = H.rows();
  for (std::size_t i = 0; i < n; ++i) trace += 2.0 * H.at(i, i);
  double damping = 1e-2 * trace / static_cast<double>(n);
  for (std::size_t i = 0; i < H.values.size(); ++i) H.values[i] *= 2.0;
  for (std::size_t i = 0; i < n; ++i) H.at(i, i) += damping;
  return H;
}

namespace {

// Dense Cholesky inverse; throws NumericalError when the matrix is not
// positive definite.
Tensor cholesky_inverse(const Tensor& H) {
  H.require_2d();
  std::size_t n = H.rows();
  if (H.cols() != n) throw ArgumentError("cholesky_inverse: not square");
  Tensor Lmat = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = H.at(i, j);
      for (std::size_t p = 0; p < j; ++p) sum -= Lmat.at(i, p) * Lmat.at(j, p);
      if (i == j) {
        if (!(sum > 0.0) || !std::isfinite(sum)) {
          throw NumericalError("matrix not positive definite");
        }
        Lmat.at(i, i) = std::sqrt(sum);
      } else {
        Lmat.at(i, j) = sum / Lmat.at(j, j);
      }
    }
  }
  // Solve L L^T X = I column by column.
  Tensor inv = Tensor::matrix(n, n);
  std::vector<double> y(n);
  for (std::size_t col = 0; col < n; ++col) {
    for (std::size_t i = 0; i < n; ++i) {
      double sum = (i == col) ? 1.0 : 0.0;
      for (std::size_t p = 0; p < i; ++p) sum -= Lmat.at(i, p) * y[p];
      y[i] = sum / Lmat.at(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double sum = y[i];
      for (std::size_t p = i + 1; p < n; ++p) sum -= Lmat.at(p, i) * inv.at(p, col);
      inv.at(i, col) = sum / Lmat.at(i, i);
    }
  }
  return inv;
}

}  // namespace

ObcRowResult obc_quantize_row(const std::vector<double>& w, const Tensor& H,
                              double scale, double zero_point,
                              int num_levels) {
  std::size_t n = w.size();
  if (H.rows() != n || H.cols() != n) {
    throw ArgumentError("obc_quantize_row: Hessian shape mismatch");
  }
  Tensor Hinv = cholesky_inverse(H);

  auto grid_value = [&](double x) {
    return scale *
           (static_cast<double>(nearest_code(x, scale, zero_point, num_levels)) -
            zero_point);
  };

  ObcRowResult res;
  res.values = w;
  std::vector<bool> active(n, true);
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t best = n;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < n; ++q) {
      if (!active[q]) continue;
      double d = Hinv.at(q, q);
      if (!(d > 0.0)) {
        throw NumericalError("obc: non-positive inverse Hessian diagonal");
      }
      double e = res.values[q] - grid_value(res.values[q]);
      double err = e * e / d;
      if (err < best_err) {
        best_err = err;
        best = q;
      }
    }
    double v = grid_value(res.values[best]);
    double diag = Hinv.at(best, best);
    double delta = (res.values[best] - v) / diag;
    for (std::size_t j = 0; j < n; ++j) {
      if (active[j]) res.values[j] -= delta * Hinv.at(j, best);
    }
    res.values[best] = v;  // exact landing, no float residue
    active[best] = false;

    // Remove `best` from the inverse: the Schur update leaves exactly the
    // inverse of H with that row and column deleted, embedded in place.
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = Hinv.at(i, best);
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (!active[j]) continue;
        Hinv.at(i, j) -= col[i] * col[j] / diag;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      Hinv.at(i, best) = 0.0;
      Hinv.at(best, i) = 0.0;
    }

    res.order.push_back(best);
    res.w_after_step.push_back(res.values);
  }

  res.codes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    res.codes[i] = nearest_code(res.values[i], scale, zero_point, num_levels);
  }
  return res;
}

QuantizedNetwork obc_quantize(const Network& net, const CalibrationSet& calib,
                              const PrecisionMap& pmap) {
  net.validate();
  pmap.validate(net);

  ForwardCache cache;
  forward(net, calib.inputs, cache);

  QuantizedNetwork out;
  out.net = net;
  out.pmap = pmap;

  for (std::size_t li : net.affine_indices()) {
    Layer& layer = out.net.layers[li];
    BitWidth bw = pmap.for_layer(layer.name);
    if (bw == BitWidth::Full) continue;

    QuantSpec spec = calibrate_layer(layer.W, bw);
    const Tensor& X = cache.inputs[li];
    Tensor H = obc_hessian(X);
    Tensor G = matmul_at(X, X);
    int L = levels(bw);

    std::size_t rows = layer.W.rows(), width = layer.W.cols();
    QuantizedLayer q;
    q.channels = rows;
    q.width = width;
    q.spec = spec;
    q.codes.resize(rows * width);

    std::vector<double> wrow(width);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = layer.W.row(r);
      wrow.assign(src, src + width);
      ObcRowResult res =
          obc_quantize_row(wrow, H, spec.scale[r], spec.zero_point[r], L);

      // Guard the calibration-dominance contract: if the greedy result ever
      // loses to plain rounding in the layer-output metric, keep rounding.
      auto row_err = [&](const std::vector<double>& vals) {
        double total = 0.0;
        for (std::size_t a = 0; a < width; ++a) {
          double da = vals[a] - src[a];
          for (std::size_t b = 0; b < width; ++b) {
            total += da * (vals[b] - src[b]) * G.at(a, b);
          }
        }
        return total;
      };
      std::vector<double> rtn_vals(width);
      std::vector<std::int32_t> rtn_codes(width);
      for (std::size_t c = 0; c < width; ++c) {
        rtn_codes[c] = nearest_code(src[c], spec.scale[r], spec.zero_point[r], L);
        rtn_vals[c] = spec.scale[r] *
                      (static_cast<double>(rtn_codes[c]) - spec.zero_point[r]);
      }
      const bool keep_greedy = row_err(res.values) <= row_err(rtn_vals);
      const std::vector<double>& vals = keep_greedy ? res.values : rtn_vals;
      const std::vector<std::int32_t>& codes =
          keep_greedy ? res.codes : rtn_codes;
      double* dst = layer.W.row(r);
      for (std::size_t c = 0; c < width; ++c) {
        dst[c] = vals[c];
        q.codes[r * width + c] = codes[c];
      }
    }
    out.layers.emplace(layer.name, std::move(q));
  }

  batchnorm_tune(out.net, calib.inputs);
  return out;
}

double layer_output_mse(const Tensor& A, const Tensor& B,
                        const Tensor& inputs) {
  if (A.rows() != B.rows() || A.cols() != B.cols()) {
    throw ShapeError("layer_output_mse: weight shapes differ");
  }
  Tensor G = matmul_at(inputs, inputs);
  double total = 0.0;
  for (std::size_t r = 0; r < A.rows(); ++r) {
    for (std::size_t a = 0; a < A.cols(); ++a) {
      double da = A.at(r, a) - B.at(r, a);
      if (da == 0.0) continue;
      for (std::size_t b = 0; b < A.cols(); ++b) {
        total += da * (A.at(r, b) - B.at(r, b)) * G.at(a, b);
      }
    }
  }
  return total;
}

std::string method_label(Method m) {
  switch (m) {
    case Method::RTN:
      return "rtn";
    case Method::AdaRound:
      return "adaround";
    case Method::BRECQ:
      return "brecq";
    case Method::OBC:
      return "obc";
  }
  throw ArgumentError("unknown method");
}

Method method_from_label(const std::string& label) {
  if (label == "rtn") return Method::RTN;
  if (label == "adaround") return Method::AdaRound;
  if (label == "brecq") return Method::BRECQ;
  if (label == "obc") return Method::OBC;
  throw ConfigError("unknown method label: " + label);
}

QuantizedNetwork quantize_network(const Network& net, Method method,
                                  const CalibrationSet& calib,
                                  const PrecisionMap& pmap,
                                  const AdaRoundConfig& cfg) {
  switch (method) {
    case Method::RTN:
      return rtn_quantize(net, pmap);
    case Method::AdaRound:
      return adaround_quantize(net, calib, pmap, cfg);
    case Method::BRECQ:
      return brecq_quantize(net, default_partition(net), calib, pmap, cfg);
    case Method::OBC:
      return obc_quantize(net, calib, pmap);
  }
  throw ArgumentError("unknown method");
}

}  // namespace bitleak
