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

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "bitleak/checkpoint.hpp"
#include "bitleak/config.hpp"
#include "bitleak/error.hpp"
#include "bitleak/metrics.hpp"
#include "bitleak/mia.hpp"
#include "bitleak/rng.hpp"
#include "bitleak/runner.hpp"
#include "bitleak/textio.hpp"

namespace {

using namespace bitleak;
using nlohmann::json;

constexpr std::uint64_t kTargetInitStream = 0x7E0;
constexpr std::uint64_t kTargetTrainStream = 0x7E1;
constexpr std::uint64_t kShadowStream = 0x5AD;

// CI hook: a set BITLEAK_SEED_OVERRIDE collapses the config's seed list to
// that single seed for every verb.
void apply_seed_override(ExperimentConfig& cfg) {
  const char* env = std::getenv("BITLEAK_SEED_OVERRIDE");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  unsigned long long v = std::strtoull(env, &end, 10);
  if (end == nullptr || *end != '\0') {
    throw ConfigError("BITLEAK_SEED_OVERRIDE must be an unsigned integer");
  }
  cfg.seeds = {static_cast<std::uint64_t>(v)};
}

ExperimentConfig load(const std::string& path) {
  ExperimentConfig cfg = load_config(path);
  apply_seed_override(cfg);
  return cfg;
}

int cmd_train(const std::string& config_path, std::uint64_t seed,
              bool seed_given, const std::string& out_path) {
  ExperimentConfig cfg = load(config_path);
  if (!seed_given) seed = cfg.seeds.front();
  Dataset ds = dataset_for(cfg, seed);
  SplitPlan plan = make_split_plan(ds, cfg.dataset.calibration, seed);
  Network net = mlp_template(ds.dim(), static_cast<std::size_t>(ds.class_count),
                             Rng::mix2(seed, kTargetInitStream));
  TrainRecipe recipe = cfg.recipe;
  recipe.seed = Rng::mix2(seed, kTargetTrainStream);
  train(net, ds.subset(plan.target_train), recipe);
  json meta;
  meta["seed"] = seed;
  meta["train_accuracy"] = evaluate(net, ds.subset(plan.target_train));
  meta["accuracy"] = evaluate(net, ds.subset(plan.holdout()));
  save_network(out_path, net, meta);
  std::cout << "trained seed " << seed << ": holdout accuracy "
            << format_double(meta["accuracy"].get<double>()) << ", saved "
            << out_path << "\n";
  return 0;
}

int cmd_quantize(const std::string& config_path,
                 const std::string& checkpoint_path,
                 const std::string& method_name, const std::string& bits_name,
                 const std::string& decouple_name,
                 const std::string& out_path) {
  ExperimentConfig cfg = load(config_path);
  Network net = load_network(checkpoint_path);
  json meta = load_meta(checkpoint_path);
  if (!meta.contains("seed")) {
    throw FormatError("checkpoint has no seed in meta; cannot rebuild the "
                      "calibration split");
  }
  std::uint64_t seed = meta["seed"].get<std::uint64_t>();
  Dataset ds = dataset_for(cfg, seed);
  SplitPlan plan = make_split_plan(ds, cfg.dataset.calibration, seed);
  CalibrationSet calib = make_calibration(ds, plan);

  Method method = method_from_label(method_name);
  PrecisionMap pmap;
  pmap.default_bits = bitwidth_from_label(bits_name);
  if (!decouple_name.empty()) {
    pmap = decouple(pmap, net, bitwidth_from_label(decouple_name));
  }
  QuantizedNetwork qn = quantize_network(net, method, calib, pmap,
                                         cfg.adaround);
  json qmeta;
  qmeta["seed"] = seed;
  qmeta["method"] = method_name;
  qmeta["accuracy"] = evaluate(qn.net, ds.subset(plan.holdout()));
  save_quantized(out_path, qn, qmeta);
  std::cout << "quantized with " << method_name << ": holdout accuracy "
            << format_double(qmeta["accuracy"].get<double>()) << ", saved "
            << out_path << "\n";
  return 0;
}

int cmd_attack(const std::string& config_path,
               const std::string& checkpoint_path, const std::string& mode_name,
               const std::string& out_dir) {
  ExperimentConfig cfg = load(config_path);
  json meta = load_meta(checkpoint_path);
  if (!meta.contains("seed")) {
    throw FormatError("checkpoint has no seed in meta");
  }
  std::uint64_t seed = meta["seed"].get<std::uint64_t>();

  // Accept either checkpoint flavor; the attack only needs the network.
  Network target;
  try {
    target = load_network(checkpoint_path);
  } catch (const Error&) {
    target = load_quantized(checkpoint_path).net;
  }

  Dataset ds = dataset_for(cfg, seed);
  SplitPlan plan = make_split_plan(ds, cfg.dataset.calibration, seed);
  LiraMode mode = mode_name.empty() ? cfg.modes.front()
                                    : lira_mode_from_label(mode_name);

  ShadowEnsemble ens = train_shadows(ds, cfg.shadows,
                                     Rng::mix2(seed, kShadowStream),
                                     cfg.recipe);
  std::vector<int> truth(ds.n());
  std::vector<std::uint8_t> truth8(ds.n());
  for (std::size_t j = 0; j < ds.n(); ++j) {
    truth[j] = plan.is_member(j) ? 1 : 0;
    truth8[j] = static_cast<std::uint8_t>(truth[j]);
  }
  AttackResult r = attack(target, ds, truth, ens, mode);
  ROCReport report = roc(r.scores, truth8);

  std::filesystem::create_directories(out_dir);
  std::string label = lira_mode_label(mode);
  write_text_file(out_dir + "/scores_" + label + ".csv", scores_csv(r));
  write_text_file(out_dir + "/metrics_" + label + ".json",
                  metrics_json(report));
  std::cout << "attack " << label << ": auroc "
            << format_double(report.auroc) << ", wrote " << out_dir << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, std::size_t workers, bool resume,
            const std::string& out_override, std::size_t max_cells) {
  ExperimentConfig cfg = load(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  RunOptions opts;
  opts.workers = workers;
  opts.resume = resume;
  opts.max_cells = max_cells;
  RunManifest manifest = run_experiment(cfg, opts);

  std::size_t done = 0, cached = 0, failed = 0, pending = 0;
  for (const CellOutcome& c : manifest.cells) {
    if (c.status == "done") ++done;
    if (c.status == "cached") ++cached;
    if (c.status == "failed") ++failed;
    if (c.status == "pending") ++pending;
  }
  std::cout << "run: " << done << " done, " << cached << " cached, " << failed
            << " failed, " << pending << " pending; summary at "
            << cfg.output_dir << "/summary.csv\n";
  for (const CellOutcome& c : manifest.cells) {
    if (c.status == "failed") {
      std::cerr << "failed cell " << c.key.id() << ": " << c.error << "\n";
    }
  }
  return manifest.complete() ? 0 : 1;
}

int cmd_report(const std::string& config_path,
               const std::string& out_override) {
  ExperimentConfig cfg = load(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  write_report(cfg, cfg.output_dir);
  std::cout << "report written under " << cfg.output_dir << "/report\n";
  return 0;
}

// Fast internal oracle battery; exits nonzero on the first failure.
int cmd_selftest() {
  std::size_t checks = 0;
  auto expect = [&](bool ok, const std::string& name) {
    if (!ok) {
      std::cerr << "FAIL " << name << "\n";
      std::exit(1);
    }
    ++checks;
    std::cout << "ok " << name << "\n";
  };

  // Quantizer: round-trip stays on the grid and within half a step.
  {
    Rng rng(7);
    bool sound = true;
    for (int trial = 0; trial < 200 && sound; ++trial) {
      Tensor W = Tensor::matrix(4, 8);
      for (double& v : W.values) v = rng.gaussian();
      for (BitWidth bw : {BitWidth::B158, BitWidth::B2, BitWidth::B4,
                          BitWidth::B8}) {
        QuantSpec spec = calibrate_layer(W, bw);
        QuantizedLayer q = quantize_uaq(W, spec);
        Tensor What = dequantize(q);
        QuantizedLayer q2 = quantize_uaq(What, spec);
        for (std::size_t i = 0; i < q.codes.size(); ++i) {
          if (q.codes[i] != q2.codes[i]) sound = false;
        }
        for (std::size_t r = 0; r < W.rows(); ++r) {
          for (std::size_t c = 0; c < W.cols(); ++c) {
            if (std::fabs(W.at(r, c) - What.at(r, c)) >
                spec.scale[r] / 2 + 1e-12) {
              sound = false;
            }
          }
        }
      }
    }
    expect(sound, "quantizer round-trip soundness");
  }

  // Gradients: analytic vs central differences on a tiny network.
  {
    Dataset ds = gen_gaussian_mixture(3, 4, 6, 2.0, 11);
    Network net = mlp_template(4, 3, 5, 8);
    ForwardCache cache;
    forward_train(net, ds.inputs, cache);
    Gradients g = backward(net, cache, ds.labels);
    Layer& l0 = net.layers[0];
    bool close = true;
    const double eps = 1e-6;
    for (int probe = 0; probe < 5; ++probe) {
      std::size_t idx = static_cast<std::size_t>(probe) * 3 % l0.W.size();
      double keep = l0.W.values[idx];
      Network plus = net, minus = net;
      plus.layers[0].W.values[idx] = keep + eps;
      minus.layers[0].W.values[idx] = keep - eps;
      ForwardCache cp, cm;
      forward_train(plus, ds.inputs, cp);
      forward_train(minus, ds.inputs, cm);
      double fd = (cross_entropy(cp.probs, ds.labels) -
                   cross_entropy(cm.probs, ds.labels)) /
                  (2 * eps);
      double an = g.dW[0].values[idx];
      if (std::fabs(fd - an) > 1e-5 * std::max(1.0, std::fabs(an))) {
        close = false;
      }
    }
    expect(close, "analytic gradients match finite differences");
  }

  // Metrics: trapezoid AUROC equals the pairwise comparison count.
  {
    Rng rng(23);
    bool match = true;
    for (int trial = 0; trial < 50 && match; ++trial) {
      std::vector<double> scores(40);
      std::vector<std::uint8_t> truth(40);
      for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i] = std::floor(rng.next_unit() * 8) / 8.0;
        truth[i] = static_cast<std::uint8_t>(i % 2);
      }
      ROCReport rep = roc(scores, truth);
      double wins = 0, total = 0;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        for (std::size_t j = 0; j < scores.size(); ++j) {
          if (truth[i] == 1 && truth[j] == 0) {
            total += 1;
            if (scores[i] > scores[j]) wins += 1;
            if (scores[i] == scores[j]) wins += 0.5;
          }
        }
      }
      if (std::fabs(rep.auroc - wins / total) > 1e-9) match = false;
    }
    expect(match, "auroc equals pairwise win rate");
  }

  // Membership matrix balance and determinism.
  {
    MembershipMatrix a = build_shadow_splits(500, 16, 3);
    MembershipMatrix b = build_shadow_splits(500, 16, 3);
    a.validate();
    expect(a.bits == b.bits, "membership splits deterministic");
  }

  std::cout << "selftest: " << checks << " checks passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bitleak: post-training quantization privacy laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::string config_path, out_path, checkpoint_path;
  std::string method_name = "rtn", bits_name = "b158", decouple_name;
  std::string mode_name;
  std::uint64_t seed = 0;
  std::size_t workers = 1, max_cells = 0;
  bool resume = false;

  CLI::App* t = app.add_subcommand("train", "Train a full-precision target");
  t->add_option("--config", config_path, "Experiment config (TOML)")
      ->required();
  CLI::Option* seed_opt = t->add_option("--seed", seed, "Experiment seed");
  t->add_option("--out", out_path, "Checkpoint path to write")->required();

  CLI::App* q = app.add_subcommand("quantize", "Quantize a trained target");
  q->add_option("--config", config_path, "Experiment config (TOML)")
      ->required();
  q->add_option("--checkpoint", checkpoint_path, "Trained target checkpoint")
      ->required();
  q->add_option("--method", method_name, "rtn|adaround|brecq|obc");
  q->add_option("--bits", bits_name, "full|b8|b4|b2|b158|b1");
  q->add_option("--decouple-last", decouple_name,
                "Bit-width override for the final layer");
  q->add_option("--out", out_path, "Quantized checkpoint path")->required();

  CLI::App* a = app.add_subcommand("attack", "Run the membership attack");
  a->add_option("--config", config_path, "Experiment config (TOML)")
      ->required();
  a->add_option("--checkpoint", checkpoint_path, "Target checkpoint")
      ->required();
  a->add_option("--mode", mode_name,
                "online|online_fixed|offline|offline_fixed");
  a->add_option("--out", out_path, "Output directory")->required();

  CLI::App* r = app.add_subcommand("run", "Full pipeline over the config grid");
  r->add_option("--config", config_path, "Experiment config (TOML)")
      ->required();
  r->add_option("--workers", workers, "Parallel cell workers");
  r->add_flag("--resume", resume, "Continue an interrupted run");
  r->add_option("--out", out_path, "Override [run] output_dir");
  r->add_option("--max-cells", max_cells,
                "Stop after this many cell executions (0 = unlimited)");

  CLI::App* rep = app.add_subcommand("report", "Aggregate a finished run");
  rep->add_option("--config", config_path, "Experiment config (TOML)")
      ->required();
  rep->add_option("--out", out_path, "Override [run] output_dir");

  app.add_subcommand("selftest", "Run the fast oracle battery");

  CLI11_PARSE(app, argc, argv);

  try {
    if (t->parsed()) {
      return cmd_train(config_path, seed, seed_opt->count() > 0, out_path);
    }
    if (q->parsed()) {
      return cmd_quantize(config_path, checkpoint_path, method_name,
                          bits_name, decouple_name, out_path);
    }
    if (a->parsed()) {
      return cmd_attack(config_path, checkpoint_path, mode_name, out_path);
    }
    if (r->parsed()) {
      return cmd_run(config_path, workers, resume, out_path, max_cells);
    }
    if (rep->parsed()) {
      return cmd_report(config_path, out_path);
    }
    return cmd_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
