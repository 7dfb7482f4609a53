// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "../helpers.hpp"
#include "../oracles.hpp"
#include "spikedrive/errors.hpp"
#include "spikedrive/tensor.hpp"

using namespace spikedrive;

TEST_SUITE("tensor") {
  TEST_CASE("construction and shape checks") {
    Tensor s;
    CHECK(s.rank() == 0);
    CHECK(s.size() == 1);
    CHECK(s[0] == 0.0);
    CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
    const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    CHECK(m.shape() == Shape{2, 3});
    CHECK(m.at(1, 2) == 6.0);
    CHECK_THROWS_AS(m.reshaped({4}), ShapeError);
    CHECK(m.reshaped({3, 2}).at(2, 1) == 6.0);
  }

  TEST_CASE("matmul matches the triple-loop oracle bitwise") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t m = 1 + rng() % 9, k = 1 + rng() % 17, n = 1 + rng() % 13;
      Tensor a = testing::random_tensor({m, k}, rng), b = testing::random_tensor({k, n}, rng);
      // Sprinkle exact zeros; the kernel skips them.
      for (std::size_t i = 0; i < a.size(); i += 3) a[i] = 0.0;
      CHECK(matmul(a, b) == oracle::matmul(a, b));
    }
    CHECK_THROWS_AS(matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), ShapeError);
  }

  TEST_CASE("conv2d matches direct convolution") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t ic = 1 + rng() % 3, oc = 1 + rng() % 4, h = 3 + rng() % 6, w = 3 + rng() % 6;
      ConvSpec spec;
      spec.kernel = testing::random_tensor({oc, ic, 3, 3}, rng);
      spec.bias = testing::random_tensor({oc}, rng);
      spec.padding = {1, 1};
      const Tensor x = testing::random_tensor({ic, h, w}, rng);
      const Tensor got = conv2d(x, spec);
      const Tensor want = oracle::conv2d(x, spec.kernel, spec.bias, 1);
      REQUIRE(got.shape() == want.shape());
      CHECK(max_abs_diff(got, want) <= 1e-13);
    }
  }

  TEST_CASE("maxpool and pooling helpers") {
    std::mt19937_64 rng(13);
    const Tensor x = testing::random_tensor({3, 6, 8}, rng);
    CHECK(maxpool2d(x) == oracle::maxpool2x2(x));
    const Tensor tokens = Tensor::matrix({{1, 2}, {3, 4}, {5, 9}});
    CHECK(global_avg_pool(tokens) == Tensor::vector({3, 5}));
    const Tensor fm(Shape{2, 1, 2}, {1, 2, 3, 4});
    CHECK(feature_map_to_tokens(fm) == Tensor::matrix({{1, 3}, {2, 4}}));
  }

  TEST_CASE("linear, column blocks, concat and stack") {
    const Tensor x = Tensor::matrix({{1, 2}, {3, 4}});
    const Tensor w = Tensor::matrix({{1, 0}, {0, 1}, {1, 1}});
    CHECK(linear(x, w, Tensor::vector({0, 0, 1})) == Tensor::matrix({{1, 2, 4}, {3, 4, 8}}));
    const Tensor y = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    const Tensor parts[] = {column_block(y, 0, 1), column_block(y, 1, 2)};
    CHECK(concat_columns(parts) == y);
    const Tensor same[] = {y, y};
    CHECK(stack(same).shape() == Shape{2, 2, 3});
    CHECK_THROWS_AS(stack(parts), ShapeError);
    CHECK_THROWS_AS(column_block(y, 2, 2), ShapeError);
  }

  TEST_CASE("elementwise helpers") {
    const Tensor a = Tensor::vector({-1, 2, 3});
    CHECK(relu(a) == Tensor::vector({0, 2, 3}));
    CHECK(add(a, a) == Tensor::vector({-2, 4, 6}));
    CHECK(subtract(a, a) == Tensor::vector({0, 0, 0}));
    CHECK(scale(a, 2) == Tensor::vector({-2, 4, 6}));
    CHECK(sum(a) == 4.0);
    CHECK(max_abs(a) == 3.0);
    CHECK(argmax(a) == 2);
    CHECK(all_finite(a));
    CHECK_FALSE(all_finite(Tensor::vector({1, NAN})));
    CHECK_THROWS_AS(add(a, Tensor::vector({1})), ShapeError);
  }
}
