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

#include "bitleak/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "bitleak/error.hpp"
#include "bitleak/rng.hpp"

namespace bitleak {

namespace {

constexpr double kRunningStatMomentum = 0.1;
constexpr double kPi = 3.14159265358979323846;

void affine_forward(const Layer& layer, const Tensor& x, Tensor& y) {
  if (x.cols() != layer.W.cols()) {
    throw ShapeError("layer '" + layer.name + "': input width " +
                     std::to_string(x.cols()) + " does not match weight width " +
                     std::to_string(layer.W.cols()));
  }
  y = matmul_bt(x, layer.W);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double* row = y.row(i);
    for (std::size_t j = 0; j < y.cols(); ++j) row[j] += layer.b[j];
  }
}

void softmax_rows(Tensor& y) {
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double* row = y.row(i);
    double mx = row[0];
    for (std::size_t j = 1; j < y.cols(); ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < y.cols(); ++j) row[j] /= sum;
  }
}

// Shared by the two inference entry points; cache may be null.
Tensor forward_impl(const Network& net, const Tensor& batch,
                    ForwardCache* cache) {
  batch.require_2d();
  if (batch.cols() != net.input_dim) {
    throw ShapeError("forward: input width " + std::to_string(batch.cols()) +
                     " does not match network input_dim " +
                     std::to_string(net.input_dim));
  }
  if (cache != nullptr) {
    cache->train_mode = false;
    cache->batch = batch.rows();
    cache->inputs.assign(net.layers.size(), Tensor());
    cache->bn_xhat.assign(net.layers.size(), Tensor());
    cache->bn_inv_std.assign(net.layers.size(), {});
  }
  Tensor h = batch;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& layer = net.layers[li];
    if (cache != nullptr) cache->inputs[li] = h;
    switch (layer.kind) {
      case LayerKind::Affine: {
        Tensor y;
        affine_forward(layer, h, y);
        h = std::move(y);
        break;
      }
      case LayerKind::BatchNorm: {
        if (h.cols() != layer.gamma.size()) {
          throw ShapeError("layer '" + layer.name + "': width mismatch");
        }
        std::vector<double> inv_std(h.cols());
        for (std::size_t j = 0; j < h.cols(); ++j) {
          inv_std[j] = 1.0 / std::sqrt(layer.running_var[j] + kBatchNormEps);
        }
        for (std::size_t i = 0; i < h.rows(); ++i) {
          double* row = h.row(i);
          for (std::size_t j = 0; j < h.cols(); ++j) {
            row[j] = layer.gamma[j] * (row[j] - layer.running_mean[j]) *
                         inv_std[j] +
                     layer.beta[j];
          }
        }
        break;
      }
      case LayerKind::ReLU:
        for (double& v : h.values) v = std::max(0.0, v);
        break;
      case LayerKind::Softmax:
        softmax_rows(h);
        break;
    }
  }
  if (cache != nullptr) cache->probs = h;
  return h;
}

}  // namespace

std::string layer_kind_label(LayerKind kind) {
  switch (kind) {
    case LayerKind::Affine:
      return "affine";
    case LayerKind::BatchNorm:
      return "batchnorm";
    case LayerKind::ReLU:
      return "relu";
    case LayerKind::Softmax:
      return "softmax";
  }
  throw ArgumentError("unknown layer kind");
}

LayerKind layer_kind_from_label(const std::string& label) {
  if (label == "affine") return LayerKind::Affine;
  if (label == "batchnorm") return LayerKind::BatchNorm;
  if (label == "relu") return LayerKind::ReLU;
  if (label == "softmax") return LayerKind::Softmax;
  throw ConfigError("unknown layer kind label: " + label);
}

Layer& Network::layer(const std::string& name) {
  for (Layer& l : layers) {
    if (l.name == name) return l;
  }
  throw ConfigError("no layer named '" + name + "'");
}

const Layer& Network::layer(const std::string& name) const {
  for (const Layer& l : layers) {
    if (l.name == name) return l;
  }
  throw ConfigError("no layer named '" + name + "'");
}

bool Network::has_layer(const std::string& name) const {
  for (const Layer& l : layers) {
    if (l.name == name) return true;
  }
  return false;
}

std::vector<std::size_t> Network::affine_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::Affine) out.push_back(i);
  }
  return out;
}

std::string Network::last_affine_name() const {
  auto idx = affine_indices();
  if (idx.empty()) {
    throw ConfigError("network has no affine layer");
  }
  return layers[idx.back()].name;
}

void Network::validate() const {
  if (layers.empty()) throw ConfigError("network: no layers");
  std::set<std::string> names;
  for (const Layer& l : layers) {
    if (l.name.empty()) throw ConfigError("network: unnamed layer");
    if (!names.insert(l.name).second) {
      throw ConfigError("network: duplicate layer name '" + l.name + "'");
    }
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    bool is_softmax = layers[i].kind == LayerKind::Softmax;
    bool is_last = i + 1 == layers.size();
    if (is_softmax != is_last) {
      throw ConfigError("network: softmax must appear exactly once, last");
    }
  }
  std::size_t width = input_dim;
  for (const Layer& l : layers) {
    if (l.kind == LayerKind::Affine) {
      if (l.W.shape.size() != 2 || l.W.cols() != width) {
        throw ConfigError("network: layer '" + l.name +
                          "' does not chain with preceding width " +
                          std::to_string(width));
      }
      if (l.b.size() != l.W.rows()) {
        throw ConfigError("network: layer '" + l.name + "' bias size mismatch");
      }
      width = l.W.rows();
    } else if (l.kind == LayerKind::BatchNorm) {
      if (l.gamma.size() != width || l.beta.size() != width ||
          l.running_mean.size() != width || l.running_var.size() != width) {
        throw ConfigError("network: layer '" + l.name +
                          "' batch-norm width mismatch");
      }
      for (double v : l.running_var) {
        if (!(v > 0.0)) {
          throw ConfigError("network: layer '" + l.name +
                            "' running variance not strictly positive");
        }
      }
    }
  }
  if (width != output_dim) {
    throw ConfigError("network: final width does not match output_dim");
  }
}

Network mlp_template(std::size_t d, std::size_t k, std::uint64_t seed,
                     std::size_t hidden) {
  auto affine = [](const std::string& name, std::size_t out, std::size_t in,
                   Rng& rng) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::Affine;
    l.W = Tensor::matrix(out, in);
    double std_dev = std::sqrt(2.0 / static_cast<double>(in));
    for (double& v : l.W.values) v = std_dev * rng.gaussian();
    l.b.assign(out, 0.0);
    return l;
  };
  auto batchnorm = [](const std::string& name, std::size_t width) {
    Layer l;
    l.name = name;
    l.kind = LayerKind::BatchNorm;
    l.gamma.assign(width, 1.0);
    l.beta.assign(width, 0.0);
    l.running_mean.assign(width, 0.0);
    l.running_var.assign(width, 1.0);
    return l;
  };
  auto plain = [](const std::string& name, LayerKind kind) {
    Layer l;
    l.name = name;
    l.kind = kind;
    return l;
  };

  Network net;
  net.input_dim = d;
  net.output_dim = k;
  Rng rng(seed, 0xA11  /* parameter-init stream */);
  net.layers.push_back(affine("affine1", hidden, d, rng));
  net.layers.push_back(batchnorm("bn1", hidden));
  net.layers.push_back(plain("relu1", LayerKind::ReLU));
  net.layers.push_back(affine("affine2", hidden, hidden, rng));
  net.layers.push_back(batchnorm("bn2", hidden));
  net.layers.push_back(plain("relu2", LayerKind::ReLU));
  net.layers.push_back(affine("affine3", k, hidden, rng));
  net.layers.push_back(plain("softmax", LayerKind::Softmax));
  net.validate();
  return net;
}

Tensor forward(const Network& net, const Tensor& batch) {
  return forward_impl(net, batch, nullptr);
}

Tensor forward(const Network& net, const Tensor& batch, ForwardCache& cache) {
  return forward_impl(net, batch, &cache);
}

Tensor forward_train(Network& net, const Tensor& batch, ForwardCache& cache) {
  batch.require_2d();
  if (batch.cols() != net.input_dim) {
    throw ShapeError("forward_train: input width mismatch");
  }
  std::size_t B = batch.rows();
  cache.train_mode = true;
  cache.batch = B;
  cache.inputs.assign(net.layers.size(), Tensor());
  cache.bn_xhat.assign(net.layers.size(), Tensor());
  cache.bn_inv_std.assign(net.layers.size(), {});

  Tensor h = batch;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    Layer& layer = net.layers[li];
    cache.inputs[li] = h;
    switch (layer.kind) {
      case LayerKind::Affine: {
        Tensor y;
        affine_forward(layer, h, y);
        h = std::move(y);
        break;
      }
      case LayerKind::BatchNorm: {
        std::size_t width = layer.gamma.size();
        if (h.cols() != width) {
          throw ShapeError("layer '" + layer.name + "': width mismatch");
        }
        std::vector<double> mean(width, 0.0), var(width, 0.0);
        for (std::size_t i = 0; i < B; ++i) {
          const double* row = h.row(i);
          for (std::size_t j = 0; j < width; ++j) mean[j] += row[j];
        }
        for (std::size_t j = 0; j < width; ++j) mean[j] /= B;
        for (std::size_t i = 0; i < B; ++i) {
          const double* row = h.row(i);
          for (std::size_t j = 0; j < width; ++j) {
            double dv = row[j] - mean[j];
            var[j] += dv * dv;
          }
        }
        for (std::size_t j = 0; j < width; ++j) var[j] /= B;

        std::vector<double> inv_std(width);
        for (std::size_t j = 0; j < width; ++j) {
          inv_std[j] = 1.0 / std::sqrt(var[j] + kBatchNormEps);
        }
        Tensor xhat = Tensor::matrix(B, width);
        for (std::size_t i = 0; i < B; ++i) {
          const double* row = h.row(i);
          double* xr = xhat.row(i);
          double* hr = h.row(i);
          for (std::size_t j = 0; j < width; ++j) {
            xr[j] = (row[j] - mean[j]) * inv_std[j];
            hr[j] = layer.gamma[j] * xr[j] + layer.beta[j];
          }
        }
        cache.bn_xhat[li] = std::move(xhat);
        cache.bn_inv_std[li] = inv_std;

        // Running statistics track the unbiased variance, as at inference
        // they stand in for the population value.
        double bessel = B > 1 ? static_cast<double>(B) / (B - 1) : 1.0;
        for (std::size_t j = 0; j < width; ++j) {
          layer.running_mean[j] =
              (1.0 - kRunningStatMomentum) * layer.running_mean[j] +
              kRunningStatMomentum * mean[j];
          layer.running_var[j] =
              (1.0 - kRunningStatMomentum) * layer.running_var[j] +
              kRunningStatMomentum * var[j] * bessel;
        }
        break;
      }
      case LayerKind::ReLU:
        for (double& v : h.values) v = std::max(0.0, v);
        break;
      case LayerKind::Softmax:
        softmax_rows(h);
        break;
    }
  }
  cache.probs = h;
  return h;
}

double cross_entropy(const Tensor& probs, const std::vector<int>& labels) {
  if (probs.rows() != labels.size()) {
    throw ShapeError("cross_entropy: batch size mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    total -= std::log(probs.at(i, static_cast<std::size_t>(labels[i])));
  }
  return total / static_cast<double>(labels.size());
}

Gradients backward(const Network& net, const ForwardCache& cache,
                   const std::vector<int>& labels) {
  if (cache.batch == 0 || cache.inputs.size() != net.layers.size()) {
    throw StateError("backward: forward cache missing or stale");
  }
  if (labels.size() != cache.batch) {
    throw StateError("backward: cache batch does not match label count");
  }
  std::size_t B = cache.batch;
  std::size_t L = net.layers.size();

  Gradients g;
  g.dW.assign(L, Tensor());
  g.db.assign(L, {});
  g.dgamma.assign(L, {});
  g.dbeta.assign(L, {});

  // Combined softmax + cross-entropy: d(mean CE)/d(logits) = (p - y)/B.
  Tensor delta = cache.probs;
  for (std::size_t i = 0; i < B; ++i) {
    delta.at(i, static_cast<std::size_t>(labels[i])) -= 1.0;
  }
  for (double& v : delta.values) v /= static_cast<double>(B);

  for (std::size_t li = L; li-- > 0;) {
    const Layer& layer = net.layers[li];
    const Tensor& x = cache.inputs[li];
    switch (layer.kind) {
      case LayerKind::Softmax:
        // Folded into the initial delta.
        break;
      case LayerKind::ReLU: {
        for (std::size_t i = 0; i < delta.rows(); ++i) {
          const double* xr = x.row(i);
          double* dr = delta.row(i);
          for (std::size_t j = 0; j < delta.cols(); ++j) {
            if (xr[j] <= 0.0) dr[j] = 0.0;
          }
        }
        break;
      }
      case LayerKind::Affine: {
        g.dW[li] = matmul_at(delta, x);
        g.db[li].assign(layer.b.size(), 0.0);
        for (std::size_t i = 0; i < delta.rows(); ++i) {
          const double* dr = delta.row(i);
          for (std::size_t j = 0; j < delta.cols(); ++j) {
            g.db[li][j] += dr[j];
          }
        }
        delta = matmul(delta, layer.W);
        break;
      }
      case LayerKind::BatchNorm: {
        std::size_t width = layer.gamma.size();
        g.dgamma[li].assign(width, 0.0);
        g.dbeta[li].assign(width, 0.0);
        if (cache.train_mode) {
          const Tensor& xhat = cache.bn_xhat[li];
          const std::vector<double>& inv_std = cache.bn_inv_std[li];
          std::vector<double> sum_d(width, 0.0), sum_dx(width, 0.0);
          for (std::size_t i = 0; i < B; ++i) {
            const double* dr = delta.row(i);
            const double* xr = xhat.row(i);
            for (std::size_t j = 0; j < width; ++j) {
              g.dbeta[li][j] += dr[j];
              g.dgamma[li][j] += dr[j] * xr[j];
            }
          }
          // dxhat = delta * gamma; gradient through batch mean and variance:
          // dx = inv_std/B * (B dxhat - sum(dxhat) - xhat sum(dxhat xhat)).
          for (std::size_t i = 0; i < B; ++i) {
            const double* dr = delta.row(i);
            const double* xr = xhat.row(i);
            for (std::size_t j = 0; j < width; ++j) {
              double dxhat = dr[j] * layer.gamma[j];
              sum_d[j] += dxhat;
              sum_dx[j] += dxhat * xr[j];
            }
          }
          for (std::size_t i = 0; i < B; ++i) {
            double* dr = delta.row(i);
            const double* xr = xhat.row(i);
            for (std::size_t j = 0; j < width; ++j) {
              double dxhat = dr[j] * layer.gamma[j];
              dr[j] = inv_std[j] / static_cast<double>(B) *
                      (static_cast<double>(B) * dxhat - sum_d[j] -
                       xr[j] * sum_dx[j]);
            }
          }
        } else {
          // Inference semantics: a fixed per-feature affine map.
          std::vector<double> inv_std(width);
          for (std::size_t j = 0; j < width; ++j) {
            inv_std[j] =
                1.0 / std::sqrt(layer.running_var[j] + kBatchNormEps);
          }
          for (std::size_t i = 0; i < B; ++i) {
            double* dr = delta.row(i);
            const double* xr = x.row(i);
            for (std::size_t j = 0; j < width; ++j) {
              double xhat =
                  (xr[j] - layer.running_mean[j]) * inv_std[j];
              g.dbeta[li][j] += dr[j];
              g.dgamma[li][j] += dr[j] * xhat;
              dr[j] *= layer.gamma[j] * inv_std[j];
            }
          }
        }
        break;
      }
    }
  }
  return g;
}

void TrainRecipe::validate() const {
  if (!(lr0 > 0.0)) throw ArgumentError("recipe: lr0 must be positive");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ArgumentError("recipe: momentum must be in [0, 1)");
  }
  if (weight_decay < 0.0) {
    throw ArgumentError("recipe: weight_decay must be >= 0");
  }
  if (batch_size == 0) throw ArgumentError("recipe: batch_size must be >= 1");
}

double TrainRecipe::lr_at(std::size_t epoch) const {
  if (schedule == Schedule::Constant) return lr0;
  double t = static_cast<double>(epoch);
  double T = static_cast<double>(epochs);
  return lr0 * 0.5 * (1.0 + std::cos(kPi * t / T));
}

std::vector<double> train(Network& net, const Dataset& data,
                          const TrainRecipe& recipe) {
  recipe.validate();
  data.validate();
  net.validate();
  if (data.dim() != net.input_dim) {
    throw ShapeError("train: dataset dimension does not match network");
  }
  std::size_t N = data.n();

  // One velocity buffer per trainable parameter vector.
  std::vector<Tensor> vW(net.layers.size());
  std::vector<std::vector<double>> vb(net.layers.size()),
      vgamma(net.layers.size()), vbeta(net.layers.size());
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& l = net.layers[li];
    if (l.kind == LayerKind::Affine) {
      vW[li] = Tensor::matrix(l.W.rows(), l.W.cols());
      vb[li].assign(l.b.size(), 0.0);
    } else if (l.kind == LayerKind::BatchNorm) {
      vgamma[li].assign(l.gamma.size(), 0.0);
      vbeta[li].assign(l.beta.size(), 0.0);
    }
  }

  auto sgd_step = [&](std::vector<double>& param, std::vector<double>& vel,
                      const std::vector<double>& grad, double lr) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      vel[i] = recipe.momentum * vel[i] + grad[i] +
               recipe.weight_decay * param[i];
      param[i] -= lr * vel[i];
    }
  };

  std::vector<double> history;
  history.reserve(recipe.epochs);
  std::vector<std::size_t> order(N);
  for (std::size_t epoch = 0; epoch < recipe.epochs; ++epoch) {
    double lr = recipe.lr_at(epoch);
    Rng shuffle_rng(recipe.seed, epoch);
    for (std::size_t i = 0; i < N; ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < N; start += recipe.batch_size) {
      std::size_t stop = std::min(N, start + recipe.batch_size);
      std::size_t B = stop - start;
      Tensor batch = Tensor::matrix(B, data.dim());
      std::vector<int> labels(B);
      for (std::size_t i = 0; i < B; ++i) {
        std::size_t src = order[start + i];
        std::copy(data.inputs.row(src), data.inputs.row(src) + data.dim(),
                  batch.row(i));
        labels[i] = data.labels[src];
      }

      ForwardCache cache;
      Tensor probs = forward_train(net, batch, cache);
      loss_sum += cross_entropy(probs, labels) * static_cast<double>(B);
      Gradients g = backward(net, cache, labels);

      for (std::size_t li = 0; li < net.layers.size(); ++li) {
        Layer& l = net.layers[li];
        if (l.kind == LayerKind::Affine) {
          Tensor& W = l.W;
          Tensor& vel = vW[li];
          const Tensor& grad = g.dW[li];
          for (std::size_t i = 0; i < W.values.size(); ++i) {
            vel.values[i] = recipe.momentum * vel.values[i] + grad.values[i] +
                            recipe.weight_decay * W.values[i];
            W.values[i] -= lr * vel.values[i];
          }
          sgd_step(l.b, vb[li], g.db[li], lr);
        } else if (l.kind == LayerKind::BatchNorm) {
          sgd_step(l.gamma, vgamma[li], g.dgamma[li], lr);
          sgd_step(l.beta, vbeta[li], g.dbeta[li], lr);
        }
      }
    }
    double epoch_loss = loss_sum / static_cast<double>(N);
    if (!std::isfinite(epoch_loss)) {
      throw TrainingError("training loss diverged", epoch);
    }
    history.push_back(epoch_loss);
  }
  return history;
}

std::vector<int> predict(const Network& net, const Dataset& data) {
  constexpr std::size_t kEvalBatch = 512;
  std::vector<int> out(data.n());
  for (std::size_t start = 0; start < data.n(); start += kEvalBatch) {
    std::size_t stop = std::min(data.n(), start + kEvalBatch);
    std::vector<std::size_t> idx(stop - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    Tensor batch = data.subset(idx).inputs;
    Tensor probs = forward(net, batch);
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      const double* row = probs.row(i);
      int best = 0;
      for (std::size_t j = 1; j < probs.cols(); ++j) {
        if (row[j] > row[best]) best = static_cast<int>(j);
      }
      out[start + i] = best;
    }
  }
  return out;
}

double evaluate(const Network& net, const Dataset& data) {
  data.validate();
  std::vector<int> pred = predict(net, data);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (pred[i] == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.n());
}

void batchnorm_tune(Network& net, const Tensor& calib_inputs) {
  calib_inputs.require_2d();
  if (calib_inputs.rows() == 0) {
    throw ArgumentError("batchnorm_tune: empty calibration batch");
  }
  if (calib_inputs.cols() != net.input_dim) {
    throw ShapeError("batchnorm_tune: calibration width mismatch");
  }
  std::size_t B = calib_inputs.rows();
  Tensor h = calib_inputs;
  for (Layer& layer : net.layers) {
    switch (layer.kind) {
      case LayerKind::Affine: {
        Tensor y;
        affine_forward(layer, h, y);
        h = std::move(y);
        break;
      }
      case LayerKind::BatchNorm: {
        std::size_t width = layer.gamma.size();
        std::vector<double> mean(width, 0.0), var(width, 0.0);
        for (std::size_t i = 0; i < B; ++i) {
          const double* row = h.row(i);
          for (std::size_t j = 0; j < width; ++j) mean[j] += row[j];
        }
        for (std::size_t j = 0; j < width; ++j) mean[j] /= B;
        for (std::size_t i = 0; i < B; ++i) {
          const double* row = h.row(i);
          for (std::size_t j = 0; j < width; ++j) {
            double dv = row[j] - mean[j];
            var[j] += dv * dv;
          }
        }
        double denom = B > 1 ? static_cast<double>(B - 1)
                             : static_cast<double>(B);
        for (std::size_t j = 0; j < width; ++j) {
          var[j] = std::max(var[j] / denom, kBatchNormEps);
          layer.running_mean[j] = mean[j];
          layer.running_var[j] = var[j];
        }
        // Propagate with the re-estimated statistics so downstream layers
        // tune against what inference will actually see.
        for (std::size_t i = 0; i < B; ++i) {
          double* row = h.row(i);
          for (std::size_t j = 0; j < width; ++j) {
            row[j] = layer.gamma[j] * (row[j] - layer.running_mean[j]) /
                         std::sqrt(layer.running_var[j] + kBatchNormEps) +
                     layer.beta[j];
          }
        }
        break;
      }
      case LayerKind::ReLU:
        for (double& v : h.values) v = std::max(0.0, v);
        break;
      case LayerKind::Softmax:
        softmax_rows(h);
        break;
    }
  }
}

}  // namespace bitleak
