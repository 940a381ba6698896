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

#include "bitleak/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <mutex>
#include <thread>

#include "json.hpp"

#include "bitleak/checkpoint.hpp"
#include "bitleak/error.hpp"
#include "bitleak/metrics.hpp"
#include "bitleak/mia.hpp"
#include "bitleak/rng.hpp"
#include "bitleak/textio.hpp"

namespace bitleak {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Streams deriving per-seed generators; every model trained for one
// experiment seed gets an unrelated generator state.
constexpr std::uint64_t kTargetInitStream = 0x7E0;
constexpr std::uint64_t kTargetTrainStream = 0x7E1;
constexpr std::uint64_t kShadowStream = 0x5AD;

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Bits ranking for the canonical summary order: full precision first, then
// descending precision; a decoupled variant sorts right after its body.
int bits_rank(BitWidth b) {
  switch (b) {
    case BitWidth::Full:
      return 0;
    case BitWidth::B8:
      return 1;
    case BitWidth::B4:
      return 2;
    case BitWidth::B2:
      return 3;
    case BitWidth::B158:
      return 4;
    case BitWidth::B1:
      return 5;
  }
  throw ArgumentError("unknown bitwidth");
}

Dataset make_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.kind == "idx") {
    return load_idx(spec.images_path, spec.labels_path);
  }
  return gen_gaussian_mixture(static_cast<int>(spec.classes),
                              static_cast<int>(spec.dim),
                              static_cast<int>(spec.per_class), spec.sep,
                              seed);
}

// Everything one seed's cells share, kept in memory for the cell phase.
struct StageData {
  Dataset ds;
  SplitPlan plan;
  Network target;
  Tensor phi;  // [shadows x n]
  MembershipMatrix membership;
  std::vector<std::pair<LiraMode, LiraStats>> stats;
  std::vector<int> truth;
  std::vector<std::uint8_t> truth8;
};

json phi_to_json(const Tensor& t) {
  return json{{"shape", t.shape}, {"values", t.values}};
}

Tensor phi_from_json(const json& j) {
  Tensor t;
  t.shape = j.at("shape").get<std::vector<std::size_t>>();
  t.values = j.at("values").get<std::vector<double>>();
  t.require_2d();
  return t;
}

template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::size_t n_threads = std::min(workers, count);
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Builds or loads one seed's stage: the trained full-precision target plus
// the shadow confidence matrix. The stage file doubles as the completion
// marker because it is renamed into place atomically.
StageData build_stage(const ExperimentConfig& cfg, std::uint64_t seed,
                      const std::string& out, const std::string& hash,
                      double& wall_s) {
  StageData st;
  st.ds = make_dataset(cfg.dataset, seed);
  if (st.ds.n() % 2 != 0) {
    throw ConfigError("dataset size must be even for balanced queries, got " +
                      std::to_string(st.ds.n()));
  }
  st.plan = make_split_plan(st.ds, cfg.dataset.calibration, seed);
  st.membership =
      build_shadow_splits(st.ds.n(), cfg.shadows, Rng::mix2(seed, kShadowStream));

  std::string path = out + "/stages/stage_" + std::to_string(seed) + ".json";
  double t0 = now_s();
  if (fs::exists(path)) {
    json doc = json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.contains("config_hash") ||
        doc["config_hash"] != hash ||
        doc.value("seed", std::uint64_t(0)) != seed) {
      throw IntegrityError("stage file does not match this run: " + path);
    }
    st.target = network_from_json(doc.at("target"));
    st.phi = phi_from_json(doc.at("phi"));
    wall_s = 0.0;
  } else {
    st.target = mlp_template(st.ds.dim(),
                             static_cast<std::size_t>(st.ds.class_count),
                             Rng::mix2(seed, kTargetInitStream));
    TrainRecipe target_recipe = cfg.recipe;
    target_recipe.seed = Rng::mix2(seed, kTargetTrainStream);
    train(st.target, st.ds.subset(st.plan.target_train), target_recipe);

    ShadowEnsemble ens = train_shadows(
        st.ds, cfg.shadows, Rng::mix2(seed, kShadowStream), cfg.recipe);
    st.phi = shadow_phi(ens, st.ds);

    json doc;
    doc["format"] = "bitleak-stage-v1";
    doc["config_hash"] = hash;
    doc["seed"] = seed;
    doc["target"] = network_to_json(st.target);
    doc["phi"] = phi_to_json(st.phi);
    write_text_file_atomic(path, doc.dump());
    wall_s = now_s() - t0;
  }

  if (st.phi.rows() != cfg.shadows || st.phi.cols() != st.ds.n()) {
    throw IntegrityError("stage confidence matrix has wrong shape");
  }
  for (LiraMode mode : cfg.modes) {
    st.stats.emplace_back(mode, fit_lira_stats(st.phi, st.membership, mode));
  }
  st.truth.resize(st.ds.n());
  st.truth8.resize(st.ds.n());
  for (std::size_t j = 0; j < st.ds.n(); ++j) {
    int member = st.plan.is_member(j) ? 1 : 0;
    st.truth[j] = member;
    st.truth8[j] = static_cast<std::uint8_t>(member);
  }
  return st;
}

// Runs one cell: quantize per the cell key, evaluate utility, attack under
// every mode, and persist scores plus metrics. metrics.json lands last and
// atomically, making it the cell's completion marker.
std::vector<std::string> execute_cell(const ExperimentConfig& cfg,
                                      const CellKey& key,
                                      const StageData& stage,
                                      const std::string& out,
                                      const std::string& hash) {
  std::string reldir = "cells/" + key.id();
  fs::create_directories(out + "/" + reldir);
  std::vector<std::string> files;

  QuantizedNetwork qn;
  if (key.bits == BitWidth::Full && !key.decoupled) {
    // The unquantized baseline: identical for every method by construction.
    qn.net = stage.target;
    qn.pmap.default_bits = BitWidth::Full;
  } else {
    CalibrationSet calib = make_calibration(stage.ds, stage.plan);
    PrecisionMap pmap;
    pmap.default_bits = key.bits;
    if (key.decoupled) pmap = decouple(pmap, stage.target, key.last_bits);
    qn = quantize_network(stage.target, key.method, calib, pmap, cfg.adaround);
  }

  double accuracy = evaluate(qn.net, stage.ds.subset(stage.plan.holdout()));
  double train_accuracy =
      evaluate(qn.net, stage.ds.subset(stage.plan.target_train));

  json metrics;
  metrics["config_hash"] = hash;
  metrics["cell"] = key.id();
  metrics["seed"] = key.seed;
  metrics["method"] = method_label(key.method);
  metrics["bits"] = key.bits_label();
  metrics["accuracy"] = accuracy;
  metrics["train_accuracy"] = train_accuracy;

  json modes = json::object();
  for (const auto& [mode, stats] : stage.stats) {
    AttackResult r = attack_with_stats(qn.net, stage.ds, stage.truth, stats);
    ROCReport report = roc(r.scores, stage.truth8);
    bool under = false;
    double tpr = tpr_at_fpr(report, 1e-3, &under);
    json jm;
    jm["auroc"] = report.auroc;
    jm["log_auroc"] = report.log_auroc;
    jm["tpr_at_0.001"] = tpr;
    jm["tpr_at_0.001_under_resolved"] = under;
    modes[lira_mode_label(mode)] = std::move(jm);

    std::string scores_rel = reldir + "/scores_" + lira_mode_label(mode) +
                             ".csv";
    write_text_file_atomic(out + "/" + scores_rel, scores_csv(r));
    files.push_back(scores_rel);
  }
  metrics["modes"] = std::move(modes);

  std::string metrics_rel = reldir + "/metrics.json";
  write_text_file_atomic(out + "/" + metrics_rel, metrics.dump());
  files.push_back(metrics_rel);
  return files;
}

json read_cell_metrics(const std::string& output_dir, const CellKey& key) {
  std::string path = output_dir + "/cells/" + key.id() + "/metrics.json";
  if (!fs::exists(path)) {
    throw StateError("missing cell metrics: " + key.id());
  }
  json doc = json::parse(read_text_file(path), nullptr, false);
  if (doc.is_discarded()) {
    throw FormatError("cell metrics is not valid JSON: " + path);
  }
  return doc;
}

// Quartile by linear interpolation of order statistics (the convention a
// hand computation follows: position p*(n-1), fractional part interpolated).
double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw ArgumentError("percentile of empty set");
  std::sort(v.begin(), v.end());
  double pos = p * static_cast<double>(v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

}  // namespace

std::string CellKey::bits_label() const {
  std::string label = bitwidth_label(bits);
  if (decoupled) label += "+" + bitwidth_label(last_bits) + "last";
  return label;
}

std::string CellKey::id() const {
  return "s" + std::to_string(seed) + "_" + method_label(method) + "_" +
         bits_label();
}

bool CellKey::operator<(const CellKey& other) const {
  std::string ml = method_label(method), mr = method_label(other.method);
  if (ml != mr) return ml < mr;
  int bl = bits_rank(bits) * 2 + (decoupled ? 1 : 0);
  int br = bits_rank(other.bits) * 2 + (other.decoupled ? 1 : 0);
  if (bl != br) return bl < br;
  return seed < other.seed;
}

std::vector<CellKey> enumerate_cells(const ExperimentConfig& cfg) {
  std::vector<CellKey> cells;
  for (std::uint64_t seed : cfg.seeds) {
    for (Method method : cfg.methods) {
      for (BitWidth bits : cfg.bitwidths) {
        CellKey key;
        key.seed = seed;
        key.method = method;
        key.bits = bits;
        cells.push_back(key);
        if (cfg.decouple && bits != BitWidth::Full) {
          key.decoupled = true;
          key.last_bits = cfg.decouple_last;
          cells.push_back(key);
        }
      }
    }
  }
  return cells;
}

bool RunManifest::complete() const {
  for (const CellOutcome& c : cells) {
    if (c.status != "done" && c.status != "cached") return false;
  }
  return true;
}

RunManifest run_experiment(const ExperimentConfig& cfg,
                           const RunOptions& opts) {
  cfg.validate();
  std::size_t workers = std::max<std::size_t>(1, opts.workers);
  const std::string& out = cfg.output_dir;
  fs::create_directories(out + "/stages");
  fs::create_directories(out + "/cells");

  std::string hash = hash_hex(config_hash(cfg));
  std::string hash_path = out + "/hash.txt";
  if (fs::exists(hash_path)) {
    std::string prev = read_text_file(hash_path);
    if (prev != hash) {
      throw IntegrityError(
          "output directory holds a run with a different config hash (" +
          prev + " vs " + hash + ")");
    }
    if (!opts.resume) {
      throw StateError(
          "output directory already holds this config's run; pass --resume "
          "to continue it");
    }
  } else {
    write_text_file_atomic(hash_path, hash);
  }

  RunManifest manifest;
  manifest.config_hash = config_hash(cfg);
  manifest.canonical = canonical_config(cfg);
  manifest.tool_version = kToolVersion;
  manifest.summary_path = "summary.csv";

  // Phase 1: per-seed stages. Failures here abort the run, since every cell
  // of the seed would fail anyway.
  std::vector<StageData> stages(cfg.seeds.size());
  std::vector<double> stage_wall(cfg.seeds.size(), 0.0);
  parallel_for(cfg.seeds.size(), workers, [&](std::size_t i) {
    stages[i] = build_stage(cfg, cfg.seeds[i], out, hash, stage_wall[i]);
  });
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    manifest.stage_wall_s.emplace_back(cfg.seeds[i], stage_wall[i]);
  }

  // Phase 2: independent cells.
  std::vector<CellKey> cells = enumerate_cells(cfg);
  std::vector<CellOutcome> outcomes(cells.size());
  std::atomic<std::size_t> executed{0};
  parallel_for(cells.size(), workers, [&](std::size_t i) {
    CellOutcome& outcome = outcomes[i];
    outcome.key = cells[i];
    std::string metrics_path =
        out + "/cells/" + cells[i].id() + "/metrics.json";
    if (fs::exists(metrics_path)) {
      outcome.status = "cached";
      return;
    }
    if (opts.max_cells > 0 && executed.fetch_add(1) >= opts.max_cells) {
      outcome.status = "pending";
      return;
    }
    if (opts.max_cells == 0) executed.fetch_add(1);
    std::size_t stage_index = 0;
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
      if (cfg.seeds[s] == cells[i].seed) stage_index = s;
    }
    double t0 = now_s();
    try {
      outcome.files =
          execute_cell(cfg, cells[i], stages[stage_index], out, hash);
      outcome.status = "done";
    } catch (const std::exception& e) {
      outcome.status = "failed";
      outcome.error = e.what();
    }
    outcome.wall_s = now_s() - t0;
  });
  manifest.cells = std::move(outcomes);

  // Summary rebuilt from disk in canonical order, so bytes are identical
  // whether a cell ran now, in a previous process, or on another worker.
  std::vector<CellKey> sorted_cells = cells;
  std::sort(sorted_cells.begin(), sorted_cells.end());
  std::string mode0 = lira_mode_label(cfg.modes.front());
  std::string summary =
      "method,bits,seed,accuracy,auroc,log_auroc,tpr_at_0.001\n";
  for (const CellKey& key : sorted_cells) {
    std::string path = out + "/cells/" + key.id() + "/metrics.json";
    if (!fs::exists(path)) continue;
    json m = json::parse(read_text_file(path));
    const json& jm = m.at("modes").at(mode0);
    summary += method_label(key.method) + "," + key.bits_label() + "," +
               std::to_string(key.seed) + "," +
               format_double(m.at("accuracy").get<double>()) + "," +
               format_double(jm.at("auroc").get<double>()) + "," +
               format_double(jm.at("log_auroc").get<double>()) + "," +
               format_double(jm.at("tpr_at_0.001").get<double>()) + "\n";
  }
  write_text_file_atomic(out + "/summary.csv", summary);

  json jmanifest;
  jmanifest["format"] = "bitleak-manifest-v1";
  jmanifest["config_hash"] = hash;
  jmanifest["canonical"] = manifest.canonical;
  jmanifest["tool_version"] = manifest.tool_version;
  jmanifest["summary"] = manifest.summary_path;
  json jstages = json::array();
  for (const auto& [seed, wall] : manifest.stage_wall_s) {
    jstages.push_back(json{{"seed", seed}, {"wall_s", wall}});
  }
  jmanifest["stages"] = std::move(jstages);
  json jcells = json::array();
  for (const CellOutcome& c : manifest.cells) {
    json jc;
    jc["id"] = c.key.id();
    jc["seed"] = c.key.seed;
    jc["method"] = method_label(c.key.method);
    jc["bits"] = c.key.bits_label();
    jc["status"] = c.status;
    if (!c.error.empty()) jc["error"] = c.error;
    jc["wall_s"] = c.wall_s;
    jc["files"] = c.files;
    jcells.push_back(std::move(jc));
  }
  jmanifest["cells"] = std::move(jcells);
  write_text_file_atomic(out + "/manifest.json", jmanifest.dump());
  return manifest;
}

Dataset dataset_for(const ExperimentConfig& cfg, std::uint64_t seed) {
  return make_dataset(cfg.dataset, seed);
}

double cell_metric(const std::string& output_dir, const CellKey& key,
                   const std::string& field, const std::string& mode) {
  json m = read_cell_metrics(output_dir, key);
  if (mode.empty()) {
    if (!m.contains(field)) {
      throw FormatError("cell " + key.id() + " has no field '" + field + "'");
    }
    return m.at(field).get<double>();
  }
  return m.at("modes").at(mode).at(field).get<double>();
}

void write_report(const ExperimentConfig& cfg, const std::string& output_dir) {
  std::vector<CellKey> cells = enumerate_cells(cfg);
  std::vector<std::string> missing;
  for (const CellKey& key : cells) {
    if (!fs::exists(output_dir + "/cells/" + key.id() + "/metrics.json")) {
      missing.push_back(key.id());
    }
  }
  if (!missing.empty()) {
    std::string msg = "report needs " + std::to_string(missing.size()) +
                      " missing cells:";
    for (const std::string& id : missing) msg += " " + id;
    throw StateError(msg);
  }

  std::sort(cells.begin(), cells.end());
  std::string mode0 = lira_mode_label(cfg.modes.front());
  fs::create_directories(output_dir + "/report");

  // Per-(method, bits) aggregation across seeds.
  struct Group {
    std::string method, bits;
    std::vector<double> accuracy, auroc, log_auroc, tpr;
  };
  std::vector<Group> groups;
  for (const CellKey& key : cells) {
    std::string ml = method_label(key.method);
    std::string bl = key.bits_label();
    if (groups.empty() || groups.back().method != ml ||
        groups.back().bits != bl) {
      groups.push_back(Group{ml, bl, {}, {}, {}, {}});
    }
    json m = read_cell_metrics(output_dir, key);
    const json& jm = m.at("modes").at(mode0);
    groups.back().accuracy.push_back(m.at("accuracy").get<double>());
    groups.back().auroc.push_back(jm.at("auroc").get<double>());
    groups.back().log_auroc.push_back(jm.at("log_auroc").get<double>());
    groups.back().tpr.push_back(jm.at("tpr_at_0.001").get<double>());
  }

  auto fig = [&](const std::string& name,
                 std::vector<double> Group::*metric) {
    std::string csv = "method,bits,median,q1,q3\n";
    for (const Group& g : groups) {
      const std::vector<double>& v = g.*metric;
      csv += g.method + "," + g.bits + "," +
             format_double(percentile(v, 0.5)) + "," +
             format_double(percentile(v, 0.25)) + "," +
             format_double(percentile(v, 0.75)) + "\n";
    }
    write_text_file_atomic(output_dir + "/report/" + name, csv);
  };
  fig("fig_accuracy_vs_bits.csv", &Group::accuracy);
  fig("fig_auroc_vs_bits.csv", &Group::auroc);
  fig("fig_tpr_vs_bits.csv", &Group::tpr);
  fig("fig_log_auroc_vs_bits.csv", &Group::log_auroc);

  // Accuracy-privacy scatter at the ternary grid: one point per
  // (method, seed).
  std::string scatter = "method,seed,accuracy,tpr_at_0.001\n";
  for (const CellKey& key : cells) {
    if (key.bits_label() != "b158") continue;
    json m = read_cell_metrics(output_dir, key);
    scatter += method_label(key.method) + "," + std::to_string(key.seed) +
               "," + format_double(m.at("accuracy").get<double>()) + "," +
               format_double(
                   m.at("modes").at(mode0).at("tpr_at_0.001").get<double>()) +
               "\n";
  }
  write_text_file_atomic(output_dir + "/report/fig_scatter_b158.csv", scatter);
}

}  // namespace bitleak
