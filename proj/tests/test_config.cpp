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

#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "bitleak/config.hpp"
#include "bitleak/dataset.hpp"
#include "bitleak/error.hpp"
#include "bitleak/textio.hpp"

using namespace bitleak;

namespace {

// Smallest document that survives ExperimentConfig::validate().
const char* kMinimal =
    "[quantize]\n"
    "methods = [\"rtn\"]\n"
    "bitwidths = [\"b4\"]\n"
    "[run]\n"
    "seeds = [1]\n";

// Checks that parsing `text` raises ConfigError whose message contains
// every fragment.
void expect_config_error(const std::string& text,
                         std::initializer_list<const char*> fragments) {
  try {
    parse_config(text);
    FAIL_CHECK("expected ConfigError for: " << text);
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    for (const char* frag : fragments) {
      INFO("message: " << msg);
      CHECK(msg.find(frag) != std::string::npos);
    }
  }
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("full document parses every key") {
  ExperimentConfig cfg = parse_config(
      "# experiment grid\n"
      "[dataset]\n"
      "kind = \"hard_gaussian\"\n"
      "classes = 4\n"
      "dim = 8\n"
      "per_class = 50\n"
      "calibration = 32\n"
      "\n"
      "[recipe]\n"
      "epochs = 20\n"
      "lr0 = 0.05\n"
      "momentum = 0.8\n"
      "weight_decay = 0.001\n"
      "schedule = \"constant\"\n"
      "batch_size = 16\n"
      "\n"
      "[quantize]\n"
      "methods = [ \"rtn\" , \"adaround\" ]\n"
      "bitwidths = [\"b2\", \"b158\"]\n"
      "decouple_last = \"b8\"\n"
      "adaround_iters = 400\n"
      "adaround_lr = 0.02\n"
      "adaround_lambda = 0.1\n"
      "\n"
      "[attack]\n"
      "shadows = 8\n"
      "modes = [\"online\", \"offline\"]\n"
      "\n"
      "[run]\n"
      "seeds = [3, 1, 2]\n"
      "output_dir = \"results\"\n");

  CHECK(cfg.dataset.kind == "hard_gaussian");
  CHECK(cfg.dataset.classes == 4);
  CHECK(cfg.dataset.dim == 8);
  CHECK(cfg.dataset.per_class == 50);
  CHECK(cfg.dataset.sep == kHardSep);  // defaulted from the kind
  CHECK(cfg.dataset.calibration == 32);

  CHECK(cfg.recipe.epochs == 20);
  CHECK(cfg.recipe.lr0 == 0.05);
  CHECK(cfg.recipe.momentum == 0.8);
  CHECK(cfg.recipe.weight_decay == 0.001);
  CHECK(cfg.recipe.schedule == TrainRecipe::Schedule::Constant);
  CHECK(cfg.recipe.batch_size == 16);

  REQUIRE(cfg.methods.size() == 2);
  CHECK(cfg.methods[0] == Method::RTN);
  CHECK(cfg.methods[1] == Method::AdaRound);
  REQUIRE(cfg.bitwidths.size() == 2);
  CHECK(cfg.bitwidths[0] == BitWidth::B2);
  CHECK(cfg.bitwidths[1] == BitWidth::B158);
  CHECK(cfg.decouple);
  CHECK(cfg.decouple_last == BitWidth::B8);
  CHECK(cfg.adaround.iters == 400);
  CHECK(cfg.adaround.lr == 0.02);
  CHECK(cfg.adaround.lambda == 0.1);

  CHECK(cfg.shadows == 8);
  REQUIRE(cfg.modes.size() == 2);
  CHECK(cfg.modes[0] == LiraMode::Online);
  CHECK(cfg.modes[1] == LiraMode::Offline);

  std::vector<std::uint64_t> expected_seeds = {3, 1, 2};
  CHECK(cfg.seeds == expected_seeds);
  CHECK(cfg.output_dir == "results");
}

TEST_CASE("missing sections fall back to defaults") {
  ExperimentConfig cfg = parse_config(kMinimal);
  CHECK(cfg.dataset.kind == "gaussian");
  CHECK(cfg.dataset.classes == 10);
  CHECK(cfg.dataset.dim == 32);
  CHECK(cfg.dataset.per_class == 100);
  CHECK(cfg.dataset.sep == kEasySep);
  CHECK(cfg.dataset.calibration == 256);
  CHECK(cfg.recipe.epochs == 100);
  CHECK(cfg.recipe.lr0 == 0.1);
  CHECK(cfg.recipe.momentum == 0.9);
  CHECK(cfg.recipe.weight_decay == 5e-4);
  CHECK(cfg.recipe.schedule == TrainRecipe::Schedule::Cosine);
  CHECK(cfg.recipe.batch_size == 64);
  CHECK(cfg.shadows == 16);
  REQUIRE(cfg.modes.size() == 1);
  CHECK(cfg.modes[0] == LiraMode::OnlineFixedVar);
  CHECK_FALSE(cfg.decouple);
  CHECK(cfg.adaround.iters == 2000);
  CHECK(cfg.adaround.lr == 0.01);
  CHECK(cfg.adaround.lambda == 0.01);
  CHECK(cfg.output_dir == "out");
}

TEST_CASE("plain gaussian defaults to the easy separation") {
  ExperimentConfig cfg = parse_config(
      std::string("[dataset]\nkind = \"gaussian\"\n") + kMinimal);
  CHECK(cfg.dataset.sep == kEasySep);
}

TEST_CASE("comments and hashes inside strings") {
  ExperimentConfig cfg = parse_config(
      "[quantize]   # section comment\n"
      "methods = [\"rtn\"]  # list\n"
      "bitwidths = [\"full\"]\n"
      "\n"
      "[run]\n"
      "output_dir = \"out#dir\"   # hash inside quotes is content\n"
      "seeds = [1]\n");
  CHECK(cfg.output_dir == "out#dir");
}

TEST_CASE("equals sign inside a quoted value") {
  ExperimentConfig cfg = parse_config(
      std::string(kMinimal) + "output_dir = \"a=b\"\n");
  CHECK(cfg.output_dir == "a=b");
}

TEST_CASE("scientific notation numbers") {
  ExperimentConfig cfg = parse_config(
      std::string("[recipe]\nepochs = 1e2\nlr0 = 5e-2\n") + kMinimal);
  CHECK(cfg.recipe.epochs == 100);
  CHECK(cfg.recipe.lr0 == 0.05);
}

TEST_CASE("syntax errors carry line numbers") {
  SUBCASE("unterminated string") {
    expect_config_error("[dataset]\nkind = \"gaussian\n",
                        {"line 2", "unterminated string"});
  }
  SUBCASE("unterminated array") {
    expect_config_error("[run]\n\nseeds = [1, 2\n",
                        {"line 3", "unterminated array"});
  }
  SUBCASE("empty value") {
    expect_config_error("[recipe]\nepochs =\n", {"line 2", "empty value"});
  }
  SUBCASE("unparseable scalar") {
    expect_config_error("[recipe]\nepochs = 1x2\n",
                        {"line 2", "cannot parse value '1x2'"});
  }
  SUBCASE("malformed section header") {
    expect_config_error("[run\n", {"line 1", "malformed section header"});
  }
  SUBCASE("empty section name") {
    expect_config_error("[]\n", {"line 1", "empty section name"});
  }
  SUBCASE("missing equals") {
    expect_config_error("[recipe]\nepochs 100\n",
                        {"line 2", "expected 'key = value'"});
  }
  SUBCASE("empty key") {
    expect_config_error("[recipe]\n= 5\n", {"line 2", "empty key"});
  }
  SUBCASE("duplicate key") {
    expect_config_error("[recipe]\nepochs = 1\nepochs = 2\n",
                        {"line 3", "duplicate key 'epochs'"});
  }
  SUBCASE("key before any section") {
    expect_config_error("epochs = 5\n[run]\nseeds = [1]\n",
                        {"line 1", "key 'epochs' outside any section"});
  }
}

TEST_CASE("unknown names are rejected") {
  SUBCASE("unknown key reports its section and line") {
    expect_config_error("[dataset]\nrows = 5\n",
                        {"line 2", "unknown key 'rows' in [dataset]"});
  }
  SUBCASE("unknown section") {
    expect_config_error(std::string(kMinimal) + "[misc]\nx = 1\n",
                        {"unknown section [misc]"});
  }
}

TEST_CASE("type mismatches name the offending key") {
  expect_config_error("[recipe]\nepochs = \"ten\"\n",
                      {"[recipe] epochs must be a number"});
  expect_config_error("[recipe]\nepochs = true\n",
                      {"[recipe] epochs must be a number"});
  expect_config_error("[recipe]\nepochs = 2.5\n",
                      {"[recipe] epochs must be a non-negative integer"});
  expect_config_error("[recipe]\nepochs = -3\n",
                      {"[recipe] epochs must be a non-negative integer"});
  expect_config_error("[dataset]\nkind = 7\n",
                      {"[dataset] kind must be a string"});
  expect_config_error("[quantize]\nmethods = \"rtn\"\n",
                      {"[quantize] methods must be an array"});
  expect_config_error("[quantize]\nmethods = [1, 2]\n",
                      {"[quantize] methods must contain strings"});
  expect_config_error("[run]\nseeds = 3\n", {"[run] seeds must be an array"});
  expect_config_error("[run]\nseeds = [\"a\"]\n",
                      {"[run] seeds must contain non-negative integers"});
  expect_config_error("[run]\nseeds = [1.5]\n",
                      {"[run] seeds must contain non-negative integers"});
}

TEST_CASE("bad labels are rejected") {
  expect_config_error(
      "[quantize]\nmethods = [\"gptq\"]\nbitwidths = [\"b4\"]\n"
      "[run]\nseeds = [1]\n",
      {"gptq"});
  expect_config_error(
      "[quantize]\nmethods = [\"rtn\"]\nbitwidths = [\"b3\"]\n"
      "[run]\nseeds = [1]\n",
      {"b3"});
  expect_config_error(
      std::string(kMinimal) + "[attack]\nmodes = [\"hybrid\"]\n", {"hybrid"});
  expect_config_error(
      std::string(kMinimal) + "[recipe]\nschedule = \"linear\"\n",
      {"schedule must be cosine or constant"});
}

TEST_CASE("semantic validation rules") {
  SUBCASE("seeds must be nonempty") {
    expect_config_error(
        "[quantize]\nmethods = [\"rtn\"]\nbitwidths = [\"b4\"]\n"
        "[run]\nseeds = []\n",
        {"seeds must be nonempty"});
    expect_config_error("[quantize]\nmethods = [\"rtn\"]\nbitwidths = [\"b4\"]\n",
                        {"seeds must be nonempty"});
  }
  SUBCASE("shadows must be even and at least two") {
    expect_config_error(std::string(kMinimal) + "[attack]\nshadows = 7\n",
                        {"shadows must be even"});
    expect_config_error(std::string(kMinimal) + "[attack]\nshadows = 0\n",
                        {"shadows must be even"});
  }
  SUBCASE("duplicates") {
    expect_config_error(
        "[quantize]\nmethods = [\"rtn\", \"rtn\"]\nbitwidths = [\"b4\"]\n"
        "[run]\nseeds = [1]\n",
        {"duplicate method"});
    expect_config_error(
        "[quantize]\nmethods = [\"rtn\"]\nbitwidths = [\"b2\", \"b2\"]\n"
        "[run]\nseeds = [1]\n",
        {"duplicate bitwidth"});
  }
  SUBCASE("decoupled last layer cannot stay full precision") {
    expect_config_error(
        "[quantize]\nmethods = [\"rtn\"]\nbitwidths = [\"b2\"]\n"
        "decouple_last = \"full\"\n[run]\nseeds = [1]\n",
        {"decouple_last cannot be full"});
  }
  SUBCASE("dataset geometry") {
    expect_config_error(
        std::string(kMinimal) + "[dataset]\nclasses = 4\ndim = 2\n",
        {"dim >= classes"});
    expect_config_error(std::string(kMinimal) + "[dataset]\nclasses = 1\n",
                        {"at least 2 classes"});
    expect_config_error(std::string(kMinimal) + "[dataset]\nper_class = 0\n",
                        {"per_class must be positive"});
    expect_config_error(std::string(kMinimal) + "[dataset]\nsep = 0\n",
                        {"sep must be positive"});
    expect_config_error(std::string(kMinimal) + "[dataset]\ncalibration = 0\n",
                        {"calibration size must be positive"});
    expect_config_error(std::string(kMinimal) + "[dataset]\nkind = \"csv\"\n",
                        {"kind must be gaussian, hard_gaussian or idx"});
    expect_config_error(std::string(kMinimal) + "[dataset]\nkind = \"idx\"\n",
                        {"needs images_path and labels_path"});
  }
  SUBCASE("nested recipe and adaround validation propagates") {
    CHECK_THROWS_AS(
        parse_config(std::string(kMinimal) + "[recipe]\nlr0 = 0\n"),
        ArgumentError);
    CHECK_THROWS_AS(
        parse_config(std::string(kMinimal) + "[quantize2]\n"), ConfigError);
    CHECK_THROWS_AS(
        parse_config(std::string("[quantize]\nmethods = [\"rtn\"]\n"
                                 "bitwidths = [\"b4\"]\nadaround_iters = 0\n"
                                 "[run]\nseeds = [1]\n")),
        ArgumentError);
  }
}

TEST_CASE("canonical form ignores formatting and output_dir") {
  ExperimentConfig a = parse_config(
      "[dataset]\nkind = \"hard_gaussian\"\nclasses = 4\ndim = 8\n"
      "per_class = 50\ncalibration = 32\n"
      "[quantize]\nmethods = [\"rtn\", \"obc\"]\nbitwidths = [\"b2\"]\n"
      "[run]\nseeds = [1, 2]\noutput_dir = \"left\"\n");
  ExperimentConfig b = parse_config(
      "# same experiment, shuffled and spelled out\n"
      "[run]\noutput_dir = \"right\"\nseeds = [1, 2]\n"
      "[quantize]\nbitwidths = [\"b2\"]\nmethods = [\"rtn\", \"obc\"]\n"
      "[dataset]\ncalibration = 32\nper_class = 50\ndim = 8\nclasses = 4\n"
      "kind = \"hard_gaussian\"\nsep = 3.5\n");
  REQUIRE(kHardSep == 3.5);  // the explicit sep above must match the default
  CHECK(canonical_config(a) == canonical_config(b));
  CHECK(config_hash(a) == config_hash(b));

  ExperimentConfig c = a;
  c.dataset.per_class = 51;
  CHECK(config_hash(c) != config_hash(a));
  c = a;
  c.output_dir = "elsewhere";
  CHECK(config_hash(c) == config_hash(a));
}

TEST_CASE("canonical form golden string and hash") {
  ExperimentConfig cfg = parse_config(
      "[dataset]\nclasses = 3\ndim = 6\nper_class = 20\nsep = 4.5\n"
      "calibration = 16\n"
      "[recipe]\nepochs = 10\nlr0 = 0.25\nmomentum = 0.5\n"
      "weight_decay = 0.125\nbatch_size = 32\n"
      "[quantize]\nmethods = [\"obc\"]\nbitwidths = [\"b1\", \"full\"]\n"
      "adaround_iters = 100\nadaround_lr = 0.5\nadaround_lambda = 0.25\n"
      "[attack]\nshadows = 4\nmodes = [\"offline\"]\n"
      "[run]\nseeds = [5, 7]\n");
  std::string expected =
      "dataset(kind=gaussian,classes=3,dim=6,per_class=20,sep=4.5,"
      "calibration=16);"
      "recipe(epochs=10,lr0=0.25,momentum=0.5,weight_decay=0.125,"
      "schedule=cosine,batch_size=32);"
      "quantize(methods=obc,bitwidths=b1,full,,adaround=100/0.5/0.25);"
      "attack(shadows=4,modes=offline,);"
      "seeds(5,7,)";
  CHECK(canonical_config(cfg) == expected);

  // FNV-1a over the canonical string, constants from the manifest format.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : expected) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  CHECK(config_hash(cfg) == h);
}

TEST_CASE("decoupled precision appears in the canonical form") {
  ExperimentConfig cfg = parse_config(
      "[quantize]\nmethods = [\"rtn\"]\nbitwidths = [\"b2\"]\n"
      "decouple_last = \"b8\"\n[run]\nseeds = [1]\n");
  std::string canon = canonical_config(cfg);
  CHECK(canon.find("decouple_last=b8") != std::string::npos);

  ExperimentConfig plain = parse_config(kMinimal);
  CHECK(canonical_config(plain).find("decouple_last") == std::string::npos);
}

TEST_CASE("idx datasets canonicalize by path") {
  ExperimentConfig cfg = parse_config(
      "[dataset]\nkind = \"idx\"\nimages_path = \"im.idx\"\n"
      "labels_path = \"lb.idx\"\n" +
      std::string(kMinimal));
  std::string canon = canonical_config(cfg);
  CHECK(canon.find("kind=idx") != std::string::npos);
  CHECK(canon.find("images=im.idx") != std::string::npos);
  CHECK(canon.find("labels=lb.idx") != std::string::npos);
  CHECK(canon.find("per_class") == std::string::npos);
}

TEST_CASE("load_config reads from disk") {
  std::filesystem::path dir =
      std::filesystem::temp_directory_path() /
      ("bitleak_cfg_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  std::string path = (dir / "exp.toml").string();
  write_text_file(path, kMinimal);
  ExperimentConfig cfg = load_config(path);
  CHECK(cfg.methods == std::vector<Method>{Method::RTN});
  CHECK_THROWS_AS(load_config((dir / "absent.toml").string()), Error);
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
}

}  // TEST_SUITE
