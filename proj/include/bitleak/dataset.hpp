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

#ifndef BITLEAK_DATASET_HPP
#define BITLEAK_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "bitleak/tensor.hpp"

namespace bitleak {

// Labeled dataset. inputs is [N x d]; labels[i] in [0, class_count).
struct Dataset {
  Tensor inputs;
  std::vector<int> labels;
  std::string name;
  int class_count = 0;

  std::size_t n() const { return labels.size(); }
  std::size_t dim() const { return inputs.cols(); }

  // Rows/labels gathered by index, order preserved.
  Dataset subset(const std::vector<std::size_t>& indices) const;

  void validate() const;
};

// Leakage-safe split bookkeeping for one experiment seed. The population is
// the full index range [0, n); target_train is the random half the target
// model trains on; calibration is a subset of target_train, so quantization
// never sees held-out data.
struct SplitPlan {
  std::vector<std::size_t> target_train;  // sorted, size floor(n/2)
  std::vector<std::size_t> calibration;   // sorted, subset of target_train
  std::size_t n = 0;
  std::uint64_t seed = 0;

  // Sorted complement of target_train: the non-member half.
  std::vector<std::size_t> holdout() const;

  bool is_member(std::size_t index) const;
  void validate() const;
};

// k Gaussian classes in d dimensions: class c is N(mu_c, I) with the means
// on a scaled axis simplex (mu_c = (sep/sqrt 2) e_c), so every pair of means
// is exactly sep apart. Requires d >= k. Deterministic per seed.
Dataset gen_gaussian_mixture(int k, int d, int n_per_class, double sep,
                             std::uint64_t seed);

// Harder companion task: more classes, lower separation, tuned so a
// full-precision MLP under the default recipe lands in the 0.5-0.7 test
// accuracy band. Same generator with sep fixed at kHardSep.
inline constexpr double kHardSep = 3.5;
Dataset gen_hard_mixture(int k, int d, int n_per_class, std::uint64_t seed);

// Default separation for the easy task: nearest-centroid accuracy ~0.93 at
// k=10, d=32, comfortably above the 0.85 full-precision target.
inline constexpr double kEasySep = 4.5;

// IDX file pair (big-endian magic + dims, unsigned-byte payload). Pixel
// bytes are scaled to [0, 1] by dividing by 255 exactly.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path);

// Writes a dataset in the same IDX format; values are clamped to [0, 1] and
// scaled by 255 with round-to-nearest. load_idx(save_idx(ds)) is value-exact
// for byte-representable inputs.
void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path);

// Random half split plus a size-C calibration subset of the training half.
// One plan per seed is shared by every quantization method, so calibrated
// grids are comparable across methods.
SplitPlan make_split_plan(const Dataset& ds, std::size_t calib_size,
                          std::uint64_t seed);

}  // namespace bitleak

#endif  // BITLEAK_DATASET_HPP
