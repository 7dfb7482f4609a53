// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <random>
#include <vector>

#include "spikedrive/kernels.hpp"

using namespace spikedrive::kernels;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, double theta) {
  std::uniform_real_distribution<double> u(-2.0, 3.0);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (rng() % 6) {
      case 0: v[i] = 0.0; break;
      case 1: v[i] = theta; break;  // exactly at threshold
      case 2: v[i] = -0.0; break;
      default: v[i] = u(rng);
    }
  }
  return v;
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("scalar backend is always available and listed first") {
    const auto all = available_backends();
    REQUIRE(!all.empty());
    CHECK(all.front()->backend == Backend::Scalar);
    CHECK(parse_backend("avx2") == Backend::Avx2);
    CHECK(parse_backend("neon") == Backend::Neon);
    CHECK_FALSE(parse_backend("sse9").has_value());
  }

  TEST_CASE("select_backend switches the active table") {
    const Backend before = active().backend;
    REQUIRE(select_backend(Backend::Scalar));
    CHECK(active().backend == Backend::Scalar);
    for (const auto* k : available_backends()) {
      REQUIRE(select_backend(k->backend));
      CHECK(active().backend == k->backend);
    }
    select_backend(before);
  }

  TEST_CASE("every SIMD backend is bit-identical to scalar") {
    const KernelTable& ref = scalar_kernels();
    std::mt19937_64 rng(2024);
    for (const KernelTable* k : available_backends()) {
      CAPTURE(k->name);
      for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 15u, 16u, 17u, 63u, 130u}) {
        CAPTURE(n);
        const double theta = 0.75;
        const auto x = random_values(rng, n, theta);
        const auto y0 = random_values(rng, n, theta);

        auto y_ref = y0, y_k = y0;
        ref.add_inplace(x.data(), y_ref.data(), n);
        k->add_inplace(x.data(), y_k.data(), n);
        CHECK(same_bits(y_ref, y_k));

        std::vector<double> o_ref(n), o_k(n);
        ref.scale_shift(x.data(), 0.37, -1.25, o_ref.data(), n);
        k->scale_shift(x.data(), 0.37, -1.25, o_k.data(), n);
        CHECK(same_bits(o_ref, o_k));

        ref.relu(x.data(), o_ref.data(), n);
        k->relu(x.data(), o_k.data(), n);
        CHECK(same_bits(o_ref, o_k));

        ref.lsq_levels(x.data(), 0.3, 4.0, o_ref.data(), n);
        k->lsq_levels(x.data(), 0.3, 4.0, o_k.data(), n);
        CHECK(same_bits(o_ref, o_k));

        auto v_ref = x, v_k = x;
        std::vector<double> s_ref(n), s_k(n);
        const std::size_t c_ref = ref.fire(v_ref.data(), theta, s_ref.data(), n);
        const std::size_t c_k = k->fire(v_k.data(), theta, s_k.data(), n);
        CHECK(c_ref == c_k);
        CHECK(same_bits(s_ref, s_k));
        CHECK(same_bits(v_ref, v_k));
      }
      for (int trial = 0; trial < 40; ++trial) {
        const std::size_t m = 1 + rng() % 9, kk = 1 + rng() % 20, p = 1 + rng() % 19;
        const auto a = random_values(rng, m * kk, 1.0);
        const auto b = random_values(rng, kk * p, 1.0);
        const auto c0 = random_values(rng, m * p, 1.0);
        auto c_ref = c0, c_k = c0;
        ref.gemm_accumulate(a.data(), b.data(), c_ref.data(), m, kk, p);
        k->gemm_accumulate(a.data(), b.data(), c_k.data(), m, kk, p);
        CHECK(same_bits(c_ref, c_k));
      }
    }
  }

  TEST_CASE("scalar fire semantics") {
    std::vector<double> v{0.5, 1.0, 1.5, -1.0};
    std::vector<double> s(4);
    CHECK(scalar_kernels().fire(v.data(), 1.0, s.data(), 4) == 2);
    CHECK(s == std::vector<double>{0, 1, 1, 0});
    CHECK(v == std::vector<double>{0.5, 0.0, 0.5, -1.0});
  }
}
