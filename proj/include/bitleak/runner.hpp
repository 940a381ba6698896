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

#ifndef BITLEAK_RUNNER_HPP
#define BITLEAK_RUNNER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "bitleak/config.hpp"

namespace bitleak {

inline constexpr const char* kToolVersion = "bitleak 0.1.0";

struct RunOptions {
  std::size_t workers = 1;
  bool resume = false;
  // Stop scheduling new cells after this many executions in this process
  // (0 = unlimited). Already-completed cells do not count. Lets tests and
  // smoke runs interrupt a run at a deterministic budget.
  std::size_t max_cells = 0;
};

// One experiment cell: a (seed, method, bitwidth) point of the grid,
// optionally with the last layer decoupled to a higher precision.
struct CellKey {
  std::uint64_t seed = 0;
  Method method = Method::RTN;
  BitWidth bits = BitWidth::Full;
  bool decoupled = false;
  BitWidth last_bits = BitWidth::B8;

  // "b158" or "b158+b8last".
  std::string bits_label() const;
  // Directory-safe unique id, e.g. "s3_obc_b158+b8last".
  std::string id() const;
  // Total order used for the summary CSV: method label, bits rank, seed.
  bool operator<(const CellKey& other) const;
};

// Every cell of a config in deterministic enumeration order.
std::vector<CellKey> enumerate_cells(const ExperimentConfig& cfg);

struct CellOutcome {
  CellKey key;
  std::string status;  // "done", "cached", "failed", "pending"
  std::string error;
  double wall_s = 0.0;
  std::vector<std::string> files;  // relative to output_dir
};

struct RunManifest {
  std::uint64_t config_hash = 0;
  std::string canonical;
  std::string tool_version;
  std::vector<CellOutcome> cells;
  std::vector<std::pair<std::uint64_t, double>> stage_wall_s;  // per seed
  std::string summary_path;

  bool complete() const;
};

// Full pipeline: per-seed stages (dataset, split, target training, shadow
// ensemble, confidence matrix), then independent quantize-and-attack cells,
// then summary.csv and manifest.json. Stages and cells already on disk with
// a matching config hash are reused when opts.resume is set; a hash
// mismatch in the output directory is an IntegrityError. Cell failures are
// recorded and do not stop other cells.
RunManifest run_experiment(const ExperimentConfig& cfg,
                           const RunOptions& opts);

// Aggregates a completed run: medians and interquartile ranges per
// (method, bits) into per-figure CSVs under <output_dir>/report. An
// incomplete run raises StateError listing the missing cells.
void write_report(const ExperimentConfig& cfg, const std::string& output_dir);

// Reads one numeric field of a cell's metrics.json ("accuracy",
// "train_accuracy", or a mode-scoped metric like "auroc"). Used by report
// aggregation and by external checks over finished runs.
double cell_metric(const std::string& output_dir, const CellKey& key,
                   const std::string& field, const std::string& mode = "");

// The dataset exactly as the runner builds it for one seed: synthetic kinds
// regenerate from the seed, idx kinds load the configured files.
Dataset dataset_for(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace bitleak

#endif  // BITLEAK_RUNNER_HPP
