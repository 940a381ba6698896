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

#ifndef BITLEAK_NETWORK_HPP
#define BITLEAK_NETWORK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "bitleak/dataset.hpp"
#include "bitleak/tensor.hpp"

namespace bitleak {

enum class LayerKind { Affine, BatchNorm, ReLU, Softmax };

std::string layer_kind_label(LayerKind kind);
LayerKind layer_kind_from_label(const std::string& label);

// One network layer. Field usage depends on kind: Affine uses W [out x in]
// and b [out]; BatchNorm uses gamma/beta/running_mean/running_var (all of
// the layer width); ReLU and Softmax carry no parameters.
struct Layer {
  std::string name;
  LayerKind kind = LayerKind::ReLU;
  Tensor W;
  std::vector<double> b;
  std::vector<double> gamma, beta, running_mean, running_var;
};

// Feedforward classifier: an ordered layer list ending in exactly one
// Softmax. Forward maps [B x input_dim] to probabilities [B x output_dim].
struct Network {
  std::vector<Layer> layers;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;

  Layer& layer(const std::string& name);
  const Layer& layer(const std::string& name) const;
  bool has_layer(const std::string& name) const;

  // Indices of Affine layers in network order.
  std::vector<std::size_t> affine_indices() const;
  // Name of the final Affine layer (the decoupling target).
  std::string last_affine_name() const;

  // Checks layer dimension chaining, the terminal Softmax, positive running
  // variances and unique names; throws on violation.
  void validate() const;
};

// The desk-scale classifier template:
// Affine(d->hidden) BN ReLU Affine(hidden->hidden) BN ReLU Affine(hidden->k)
// Softmax. Weights are seeded He-normal draws, biases zero.
Network mlp_template(std::size_t d, std::size_t k, std::uint64_t seed,
                     std::size_t hidden = 128);

// Everything backward() needs about one forward pass. inputs[i] is the
// activation entering layers[i]; for train-mode passes the batch-norm batch
// statistics actually used are kept, since gradients flow through them.
struct ForwardCache {
  bool train_mode = false;
  std::size_t batch = 0;
  std::vector<Tensor> inputs;
  Tensor probs;
  // Per layer index; empty for non-BatchNorm layers.
  std::vector<Tensor> bn_xhat;
  std::vector<std::vector<double>> bn_inv_std;
};

// Inference forward pass (batch-norm uses running statistics). The cache
// overload records per-layer input activations for calibration and backward.
Tensor forward(const Network& net, const Tensor& batch);
Tensor forward(const Network& net, const Tensor& batch, ForwardCache& cache);

// Training forward pass: batch-norm normalizes by batch statistics and
// updates running statistics in place (momentum 0.1, unbiased variance).
Tensor forward_train(Network& net, const Tensor& batch, ForwardCache& cache);

// Gradient of the mean cross-entropy loss for every trainable parameter.
// Entries are empty for layers without that parameter.
struct Gradients {
  std::vector<Tensor> dW;
  std::vector<std::vector<double>> db, dgamma, dbeta;
};

// Mean cross-entropy of cached probabilities against labels.
double cross_entropy(const Tensor& probs, const std::vector<int>& labels);

// Backpropagation through the cached pass. The cache must come from a
// forward over the same batch; a stale or absent cache is a StateError.
Gradients backward(const Network& net, const ForwardCache& cache,
                   const std::vector<int>& labels);

struct TrainRecipe {
  std::size_t epochs = 100;
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  enum class Schedule { Cosine, Constant };
  Schedule schedule = Schedule::Cosine;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;

  void validate() const;
  // lr at 0-based epoch t; cosine: lr0 * 0.5 * (1 + cos(pi t / epochs)).
  double lr_at(std::size_t epoch) const;
};

// SGD with momentum and weight decay over shuffled minibatches. The epoch
// permutation comes from a generator seeded by (recipe.seed, epoch), so the
// whole run is bit-reproducible. Returns per-epoch mean training loss.
// A non-finite epoch loss raises TrainingError with the epoch index.
std::vector<double> train(Network& net, const Dataset& data,
                          const TrainRecipe& recipe);

// Fraction of examples whose argmax probability matches the label; argmax
// ties break toward the lowest class index.
double evaluate(const Network& net, const Dataset& data);

// Predicted class per example (same tie rule).
std::vector<int> predict(const Network& net, const Dataset& data);

// Re-estimates batch-norm running statistics from calibration activations,
// one layer at a time in network order so later layers see the effect of
// earlier updates. Variances are floored at the batch-norm epsilon. All
// other parameters are untouched.
void batchnorm_tune(Network& net, const Tensor& calib_inputs);

inline constexpr double kBatchNormEps = 1e-5;

}  // namespace bitleak

#endif  // BITLEAK_NETWORK_HPP
