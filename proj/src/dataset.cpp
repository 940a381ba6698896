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

#include "bitleak/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "bitleak/error.hpp"
#include "bitleak/rng.hpp"

namespace bitleak {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_u32_be(std::istream& in, std::size_t& offset,
                          const std::string& path) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (in.gcount() != 4) {
    throw FormatError(path + ": truncated header", offset);
  }
  offset += 4;
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(buf), 4);
}

}  // namespace

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.name = name;
  out.class_count = class_count;
  out.inputs = Tensor::matrix(indices.size(), dim());
  out.labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::size_t src = indices[i];
    if (src >= n()) {
      throw ArgumentError("subset index out of range");
    }
    std::copy(inputs.row(src), inputs.row(src) + dim(), out.inputs.row(i));
    out.labels[i] = labels[src];
  }
  return out;
}

void Dataset::validate() const {
  inputs.require_2d();
  if (labels.size() != inputs.rows()) {
    throw ShapeError("dataset: label count does not match input rows");
  }
  if (labels.empty()) {
    throw ArgumentError("dataset: empty");
  }
  if (class_count < 1) {
    throw ArgumentError("dataset: class_count must be positive");
  }
  for (int y : labels) {
    if (y < 0 || y >= class_count) {
      throw ArgumentError("dataset: label outside [0, class_count)");
    }
  }
  require_finite(inputs, "dataset inputs");
}

std::vector<std::size_t> SplitPlan::holdout() const {
  std::vector<std::size_t> out;
  out.reserve(n - target_train.size());
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (pos < target_train.size() && target_train[pos] == i) {
      ++pos;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

bool SplitPlan::is_member(std::size_t index) const {
  return std::binary_search(target_train.begin(), target_train.end(), index);
}

void SplitPlan::validate() const {
  if (target_train.size() != n / 2) {
    throw IntegrityError("split plan: target_train is not half the data");
  }
  if (!std::is_sorted(target_train.begin(), target_train.end()) ||
      !std::is_sorted(calibration.begin(), calibration.end())) {
    throw IntegrityError("split plan: index sets must be sorted");
  }
  for (std::size_t i : target_train) {
    if (i >= n) throw IntegrityError("split plan: index out of range");
  }
  for (std::size_t i : calibration) {
    if (!is_member(i)) {
      throw IntegrityError("split plan: calibration index outside target_train");
    }
  }
}

Dataset gen_gaussian_mixture(int k, int d, int n_per_class, double sep,
                             std::uint64_t seed) {
  if (k < 2) throw ArgumentError("gen_gaussian_mixture: k must be >= 2");
  if (d < 1) throw ArgumentError("gen_gaussian_mixture: d must be >= 1");
  if (d < k) {
    throw ArgumentError(
        "gen_gaussian_mixture: axis simplex needs d >= k (got d=" +
        std::to_string(d) + ", k=" + std::to_string(k) + ")");
  }
  if (n_per_class < 1) {
    throw ArgumentError("gen_gaussian_mixture: n_per_class must be >= 1");
  }
  if (sep < 0.0) throw ArgumentError("gen_gaussian_mixture: sep must be >= 0");

  std::size_t n = static_cast<std::size_t>(k) * n_per_class;
  Dataset ds;
  ds.name = "gaussian_mixture";
  ds.class_count = k;
  ds.inputs = Tensor::matrix(n, d);
  ds.labels.resize(n);
  // mu_c = (sep / sqrt 2) e_c gives pairwise mean distance exactly sep.
  double coord = sep / std::sqrt(2.0);
  Rng rng(seed);
  std::size_t row = 0;
  for (int c = 0; c < k; ++c) {
    for (int i = 0; i < n_per_class; ++i, ++row) {
      double* x = ds.inputs.row(row);
      for (int j = 0; j < d; ++j) x[j] = rng.gaussian();
      x[c] += coord;
      ds.labels[row] = c;
    }
  }
  return ds;
}

Dataset gen_hard_mixture(int k, int d, int n_per_class, std::uint64_t seed) {
  Dataset ds = gen_gaussian_mixture(k, d, n_per_class, kHardSep, seed);
  ds.name = "hard_mixture";
  return ds;
}

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw FormatError(images_path + ": cannot open", 0);
  std::size_t offset = 0;
  std::uint32_t magic = read_u32_be(img, offset, images_path);
  if (magic != kImagesMagic) {
    throw FormatError(images_path + ": bad image magic", 0);
  }
  std::uint32_t count = read_u32_be(img, offset, images_path);
  std::uint32_t rows = read_u32_be(img, offset, images_path);
  std::uint32_t cols = read_u32_be(img, offset, images_path);
  std::size_t dim = static_cast<std::size_t>(rows) * cols;
  if (count == 0 || dim == 0) {
    throw FormatError(images_path + ": empty image file", offset);
  }

  Dataset ds;
  ds.name = "idx";
  ds.inputs = Tensor::matrix(count, dim);
  std::vector<unsigned char> buf(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), dim);
    if (static_cast<std::size_t>(img.gcount()) != dim) {
      throw FormatError(images_path + ": truncated payload",
                        offset + img.gcount());
    }
    double* x = ds.inputs.row(i);
    for (std::size_t j = 0; j < dim; ++j) {
      x[j] = static_cast<double>(buf[j]) / 255.0;
    }
    offset += dim;
  }

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError(labels_path + ": cannot open", 0);
  std::size_t loffset = 0;
  std::uint32_t lmagic = read_u32_be(lab, loffset, labels_path);
  if (lmagic != kLabelsMagic) {
    throw FormatError(labels_path + ": bad label magic", 0);
  }
  std::uint32_t lcount = read_u32_be(lab, loffset, labels_path);
  if (lcount != count) {
    throw FormatError(labels_path + ": label count " + std::to_string(lcount) +
                          " does not match image count " +
                          std::to_string(count),
                      4);
  }
  ds.labels.resize(lcount);
  int max_label = 0;
  for (std::uint32_t i = 0; i < lcount; ++i) {
    int ch = lab.get();
    if (ch == EOF) {
      throw FormatError(labels_path + ": truncated payload", loffset + i);
    }
    ds.labels[i] = ch;
    max_label = std::max(max_label, ch);
  }
  ds.class_count = max_label + 1;
  ds.validate();
  return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path) {
  ds.validate();
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw FormatError(images_path + ": cannot open for write", 0);
  write_u32_be(img, kImagesMagic);
  write_u32_be(img, static_cast<std::uint32_t>(ds.n()));
  write_u32_be(img, 1);
  write_u32_be(img, static_cast<std::uint32_t>(ds.dim()));
  std::vector<unsigned char> buf(ds.dim());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const double* x = ds.inputs.row(i);
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      double v = std::max(0.0, std::min(1.0, x[j]));
      buf[j] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    img.write(reinterpret_cast<char*>(buf.data()), buf.size());
  }

  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError(labels_path + ": cannot open for write", 0);
  write_u32_be(lab, kLabelsMagic);
  write_u32_be(lab, static_cast<std::uint32_t>(ds.n()));
  for (std::size_t i = 0; i < ds.n(); ++i) {
    lab.put(static_cast<char>(ds.labels[i]));
  }
}

SplitPlan make_split_plan(const Dataset& ds, std::size_t calib_size,
                          std::uint64_t seed) {
  std::size_t n = ds.n();
  std::size_t half = n / 2;
  if (calib_size > half) {
    throw ArgumentError("make_split_plan: calibration size " +
                        std::to_string(calib_size) +
                        " exceeds training half " + std::to_string(half));
  }
  SplitPlan plan;
  plan.n = n;
  plan.seed = seed;
  Rng member_rng(seed, 0);
  std::vector<std::size_t> perm = member_rng.permutation(n);
  plan.target_train.assign(perm.begin(), perm.begin() + half);
  std::sort(plan.target_train.begin(), plan.target_train.end());

  Rng calib_rng(seed, 1);
  std::vector<std::size_t> train_perm = plan.target_train;
  calib_rng.shuffle(train_perm);
  plan.calibration.assign(train_perm.begin(), train_perm.begin() + calib_size);
  std::sort(plan.calibration.begin(), plan.calibration.end());
  plan.validate();
  return plan;
}

}  // namespace bitleak
