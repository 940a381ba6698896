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

#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"

#include "bitleak/rng.hpp"
#include "bitleak/tensor.hpp"
#include "bitleak/textio.hpp"

using namespace bitleak;

TEST_SUITE("rng") {

TEST_CASE("same seed reproduces the stream, different seeds diverge") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_differ = false;
  for (int i = 0; i < 100; ++i) {
    std::uint64_t va = a.next_u64();
    if (va != b.next_u64()) all_equal = false;
    if (va != c.next_u64()) any_differ = true;
  }
  CHECK(all_equal);
  CHECK(any_differ);
}

TEST_CASE("streams with the same seed are independent") {
  Rng a(7, 0), b(7, 1);
  CHECK(a.next_u64() != b.next_u64());
}

TEST_CASE("next_unit stays in [0,1) and has a sane mean") {
  Rng rng(3);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    double u = rng.next_unit();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::fabs(sum / 20000 - 0.5) < 0.01);
}

TEST_CASE("below(n) covers the full range") {
  Rng rng(11);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    std::uint64_t v = rng.below(7);
    REQUIRE(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("gaussian moments match a standard normal") {
  Rng rng(5);
  double sum = 0.0, sum2 = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    double g = rng.gaussian();
    sum += g;
    sum2 += g * g;
  }
  CHECK(std::fabs(sum / n) < 0.02);
  CHECK(std::fabs(sum2 / n - 1.0) < 0.03);
}

TEST_CASE("permutation is a permutation and is seed-deterministic") {
  Rng a(9), b(9);
  std::vector<std::size_t> pa = a.permutation(64), pb = b.permutation(64);
  CHECK(pa == pb);
  std::set<std::size_t> seen(pa.begin(), pa.end());
  CHECK(seen.size() == 64);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 63);
}

}  // TEST_SUITE rng

TEST_SUITE("tensor") {

TEST_CASE("matmul agrees with an index-literal triple loop") {
  Rng rng(17);
  Tensor a = Tensor::matrix(5, 7), b = Tensor::matrix(7, 4);
  for (double& v : a.values) v = rng.gaussian();
  for (double& v : b.values) v = rng.gaussian();
  Tensor out = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 7; ++k) acc += a.at(i, k) * b.at(k, j);
      CHECK(out.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("matmul_bt and matmul_at match matmul against explicit transposes") {
  Rng rng(19);
  Tensor a = Tensor::matrix(4, 6), b = Tensor::matrix(5, 6);
  for (double& v : a.values) v = rng.gaussian();
  for (double& v : b.values) v = rng.gaussian();
  Tensor bt = Tensor::matrix(6, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) bt.at(j, i) = b.at(i, j);
  Tensor via_bt = matmul_bt(a, b);
  Tensor direct = matmul(a, bt);
  for (std::size_t i = 0; i < via_bt.size(); ++i) {
    CHECK(via_bt.values[i] == doctest::Approx(direct.values[i]).epsilon(1e-12));
  }
  Tensor at = Tensor::matrix(6, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) at.at(j, i) = a.at(i, j);
  Tensor via_at = matmul_at(a, a);
  Tensor direct2 = matmul(at, a);
  for (std::size_t i = 0; i < via_at.size(); ++i) {
    CHECK(via_at.values[i] ==
          doctest::Approx(direct2.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("shape mismatches raise ShapeError") {
  Tensor a = Tensor::matrix(2, 3), b = Tensor::matrix(4, 2);
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  Tensor v({6});
  CHECK_THROWS_AS(v.rows(), ShapeError);
}

}  // TEST_SUITE tensor

TEST_SUITE("textio") {

TEST_CASE("format_double round-trips doubles through text exactly") {
  Rng rng(23);
  for (int i = 0; i < 1000; ++i) {
    double x = rng.gaussian() * std::pow(10.0, double(rng.below(9)) - 4.0);
    CHECK(std::stod(format_double(x)) == x);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
}

TEST_CASE("atomic write leaves no temp file and stores the content") {
  std::string path = "textio_atomic_check.txt";
  write_text_file_atomic(path, "one\ntwo\n");
  CHECK(read_text_file(path) == "one\ntwo\n");
  CHECK_THROWS(read_text_file(path + ".tmp"));
  std::remove(path.c_str());
}

}  // TEST_SUITE textio
