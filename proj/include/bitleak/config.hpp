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

#ifndef BITLEAK_CONFIG_HPP
#define BITLEAK_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "bitleak/dataset.hpp"
#include "bitleak/mia.hpp"
#include "bitleak/network.hpp"
#include "bitleak/ptq.hpp"

namespace bitleak {

// How the runner obtains the dataset for each seed. Synthetic kinds are
// regenerated per seed; "idx" loads a fixed file pair once.
struct DatasetSpec {
  std::string kind = "gaussian";  // gaussian | hard_gaussian | idx
  std::size_t classes = 10;
  std::size_t dim = 32;
  std::size_t per_class = 100;
  double sep = kEasySep;          // gaussian only
  std::string images_path, labels_path;  // idx only
  std::size_t calibration = 256;

  void validate() const;
};

// One experiment grid: every (seed, method, bitwidth) combination becomes a
// cell, plus a decoupled variant of each non-Full bitwidth when
// decouple_last is set.
struct ExperimentConfig {
  DatasetSpec dataset;
  TrainRecipe recipe;
  std::size_t shadows = 16;
  std::vector<LiraMode> modes = {LiraMode::OnlineFixedVar};
  std::vector<Method> methods;
  std::vector<BitWidth> bitwidths;
  bool decouple = false;
  BitWidth decouple_last = BitWidth::B8;
  AdaRoundConfig adaround;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";

  void validate() const;
};

// Parses the documented TOML subset (sections, scalar and array values,
// comments). Unknown sections or keys raise ConfigError, as do type
// mismatches and malformed syntax.
ExperimentConfig parse_config(const std::string& toml_text);
ExperimentConfig load_config(const std::string& path);

// Canonical single-line rendering of every semantic field; two configs
// describing the same experiment serialize identically.
std::string canonical_config(const ExperimentConfig& cfg);

// FNV-1a of canonical_config; the manifest's identity for resume checks.
std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace bitleak

#endif  // BITLEAK_CONFIG_HPP
