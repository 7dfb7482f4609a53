// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "../helpers.hpp"
#include "../oracles.hpp"
#include "spikedrive/errors.hpp"
#include "spikedrive/model.hpp"

using namespace spikedrive;

namespace {

bool same_parameters(const TailoredModel& a, const TailoredModel& b) {
  if (a.tokenizer.size() != b.tokenizer.size() || a.blocks.size() != b.blocks.size()) return false;
  for (std::size_t i = 0; i < a.tokenizer.size(); ++i) {
    if (!(a.tokenizer[i].conv.kernel == b.tokenizer[i].conv.kernel)) return false;
    if (!(a.tokenizer[i].bn == b.tokenizer[i].bn)) return false;
  }
  auto same_dense = [](const Dense& x, const Dense& y) { return x.weight == y.weight && x.bias == y.bias && x.bn == y.bn; };
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    const auto& p = a.blocks[i];
    const auto& q = b.blocks[i];
    if (!same_dense(p.query, q.query) || !same_dense(p.key, q.key) || !same_dense(p.value, q.value) ||
        !same_dense(p.proj, q.proj) || !same_dense(p.fc1, q.fc1) || !same_dense(p.fc2, q.fc2))
      return false;
  }
  return same_dense(a.head, b.head) && a.quantizers == b.quantizers;
}

double rel(const Tensor& got, const std::vector<double>& want) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    diff = std::max(diff, std::abs(got[i] - want[i]));
    scale = std::max(scale, std::abs(want[i]));
  }
  return diff / std::max(scale, 1e-12);
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("config validation") {
    ModelConfig c = testing::tiny_config();
    CHECK_NOTHROW(c.validate());
    CHECK(c.head_dim() == 4);
    CHECK(c.tokens() == 16);
    ModelConfig bad = c;
    bad.embed_dim = 6;
    bad.heads = 4;
    bad.conv_blocks = {{6, true}};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.conv_blocks = {{4, true}};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.height = 7;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(build_model(bad, 1), ConfigError);
  }

  TEST_CASE("ImageNet-style token count") {
    ModelConfig c;
    c.channels = 3;
    c.height = 224;
    c.width = 224;
    c.conv_blocks = {{16, true}, {32, true}, {64, true}, {128, true}};
    c.embed_dim = 128;
    c.heads = 8;
    CHECK(c.tokens() == 196);
  }

  TEST_CASE("build_model is deterministic and structured") {
    const auto c = testing::tiny_config();
    const TailoredModel a = build_model(c, 42), b = build_model(c, 42), other = build_model(c, 43);
    CHECK(same_parameters(a, b));
    CHECK_FALSE(same_parameters(a, other));
    CHECK(a.batch_norm_count() == 1 + 6);
    CHECK_FALSE(a.head.bn.has_value());
    CHECK(a.quantizers.size() == activation_sites(c).size());
    for (const auto& [site, q] : a.quantizers) {
      CHECK(q.valid());
      CHECK(q.levels == c.quant_levels);
    }
    // Truncated normal, std 0.02, cut at two standard deviations.
    double sq = 0.0;
    std::size_t n = 0;
    for (double v : a.blocks[0].fc1.weight.data()) {
      CHECK(std::abs(v) <= 0.04);
      sq += v * v;
      ++n;
    }
    const double sd = std::sqrt(sq / static_cast<double>(n));
    CHECK(sd > 0.012);
    CHECK(sd < 0.02);
    CHECK(max_abs(a.blocks[0].fc1.bias) == 0.0);
    CHECK(a.tokenizer[0].bn->gamma == std::vector<double>(8, 1.0));
  }

  TEST_CASE("nrelu") {
    CHECK(nrelu(Tensor::scalar(-2), 5)[0] == 0.0);
    CHECK(nrelu(Tensor::scalar(8), 4)[0] == 2.0);
    CHECK(nrelu(Tensor::scalar(392), 196)[0] == 2.0);
    CHECK_THROWS_AS(nrelu(Tensor::scalar(1), 0), ConfigError);
  }

  TEST_CASE("forward matches the straight-line reimplementation") {
    const auto c = testing::tiny_config();
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      TailoredModel m = build_model(c, seed);
      randomize_affine_parameters(m, seed + 100);
      calibrate_quantizers(m, random_images(c, 4, seed));
      for (const auto& img : random_images(c, 5, seed + 7)) {
        CHECK(rel(forward(m, img, ActivationMode::Float), oracle::forward(m, img, false)) <= 1e-10);
        CHECK(rel(forward(m, img, ActivationMode::Quant), oracle::forward(m, img, true)) <= 1e-10);
      }
    }
    const auto s = testing::small_config();
    const TailoredModel m = build_fitted_model(s, 5);
    for (const auto& img : random_images(s, 3, 9)) {
      CHECK(rel(forward(m, img, ActivationMode::Float), oracle::forward(m, img, false)) <= 1e-10);
      CHECK(rel(forward(m, img, ActivationMode::Quant), oracle::forward(m, img, true)) <= 1e-10);
    }
  }

  TEST_CASE("attention and MLP blocks match dense oracles") {
    const auto c = testing::small_config();
    const TailoredModel m = build_fitted_model(c, 3);
    std::mt19937_64 rng(4);
    const Tensor x = testing::random_tensor({c.tokens(), c.embed_dim}, rng, -1.0, 2.0);
    ForwardOptions opts;
    for (bool quant : {false, true}) {
      opts.mode = quant ? ActivationMode::Quant : ActivationMode::Float;
      const auto want_a = oracle::attention(m, 0, oracle::to_matrix(x), quant);
      CHECK(max_abs_diff(tsa_forward(m, 0, x, opts), oracle::from_matrix(want_a)) <= 1e-10);
      const auto want_m = oracle::mlp(m, 1, oracle::to_matrix(x), quant);
      CHECK(max_abs_diff(tmlp_forward(m, 1, x, opts), oracle::from_matrix(want_m)) <= 1e-10);
    }
    CHECK(max_abs(tsa_forward(build_model(c, 1), 0, Tensor(x.shape()), opts)) == 0.0);
    CHECK(max_abs(tmlp_forward(build_model(c, 1), 0, Tensor(x.shape()), opts)) == 0.0);
  }

  TEST_CASE("single token attention by hand") {
    ModelConfig c;
    c.channels = 1;
    c.height = 1;
    c.width = 1;
    c.conv_blocks = {{4, false}};
    c.embed_dim = 4;
    c.heads = 1;
    c.mlp_ratio = 1;
    c.classes = 2;
    TailoredModel m = build_model(c, 1);
    auto& blk = m.blocks[0];
    Tensor eye(Shape{4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
    for (Dense* d : {&blk.query, &blk.key, &blk.value, &blk.proj}) d->weight = eye;
    const Tensor x = Tensor::matrix({{1.0, 2.0, 0.5, 3.0}});
    const Tensor y = tsa_forward(m, 0, x, ForwardOptions{});
    // q = k = v = x up to the identity BN's 1/sqrt(1 + eps); score = q.k / (N sqrt(4)).
    const double bn = 1.0 / std::sqrt(1.0 + c.bn_eps);
    for (std::size_t j = 0; j < 4; ++j) {
      const double v = x[j] * bn;
      const double s = (x[0] * bn * x[0] * bn + x[1] * bn * x[1] * bn + x[2] * bn * x[2] * bn + x[3] * bn * x[3] * bn) / 2.0;
      CHECK(y.at(0, j) == doctest::Approx(s * v * bn).epsilon(1e-12));
    }
  }

  TEST_CASE("MLP passes positive input through identity weights") {
    ModelConfig c = testing::tiny_config();
    c.mlp_ratio = 1;
    TailoredModel m = build_model(c, 1);
    Tensor eye(Shape{8, 8});
    for (std::size_t i = 0; i < 8; ++i) eye.at(i, i) = 1.0;
    m.blocks[0].fc1.weight = eye;
    m.blocks[0].fc2.weight = eye;
    m.blocks[0].fc1.bn->eps = 0.0;
    m.blocks[0].fc2.bn->eps = 0.0;
    std::mt19937_64 rng(1);
    const Tensor x = testing::random_tensor({16, 8}, rng, 0.0, 1.0);
    CHECK(tmlp_forward(m, 0, x, ForwardOptions{}) == x);
  }

  TEST_CASE("quant outputs lie on each site's grid; scores are nonnegative") {
    const auto c = testing::small_config();
    const TailoredModel m = build_fitted_model(c, 9);
    ForwardOptions opts;
    opts.mode = ActivationMode::Quant;
    std::size_t seen = 0;
    opts.observer = [&](std::string_view site, const Tensor&, const Tensor& out) {
      const auto& q = m.quantizers.at(std::string(site));
      for (double v : out.data()) {
        const double k = v / q.step;
        REQUIRE(k >= 0.0);
        REQUIRE(k <= q.levels + 1e-9);
        REQUIRE(std::abs(k - std::round(k)) <= 1e-9);
      }
      ++seen;
    };
    forward(m, random_images(c, 1, 2)[0], opts);
    CHECK(seen == activation_sites(c).size());

    ForwardOptions fl;
    fl.observer = [&](std::string_view site, const Tensor&, const Tensor& out) {
      if (site.find("score") != std::string_view::npos) CHECK(*std::min_element(out.data().begin(), out.data().end()) >= 0.0);
    };
    forward(m, random_images(c, 1, 2)[0], fl);
  }

  TEST_CASE("fine quantization approaches float") {
    ModelConfig c = testing::small_config();
    c.quant_levels = 1 << 20;
    TailoredModel m = build_fitted_model(c, 4);
    const auto images = random_images(c, 4, 77);
    calibrate_quantizers(m, images, CalibrationRule::Range);
    for (const auto& img : images) {
      const Tensor f = forward(m, img, ActivationMode::Float);
      const Tensor q = forward(m, img, ActivationMode::Quant);
      CHECK(max_abs_diff(f, q) <= 1e-3 * max_abs(f));
    }
  }

  TEST_CASE("identical images give identical logits; token order is irrelevant") {
    const auto c = testing::small_config();
    const TailoredModel m = build_fitted_model(c, 6);
    const Tensor img = random_images(c, 1, 3)[0];
    CHECK(forward(m, img, ActivationMode::Quant) == forward(m, img, ActivationMode::Quant));

    ForwardOptions opts;
    Tensor x = tokenize(m, img, opts);
    std::vector<std::size_t> perm(x.dim(0));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(1);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor px(x.shape());
    for (std::size_t i = 0; i < perm.size(); ++i)
      for (std::size_t j = 0; j < x.dim(1); ++j) px.at(i, j) = x.at(perm[i], j);
    auto blocks = [&](Tensor t) {
      for (std::size_t b = 0; b < m.blocks.size(); ++b) {
        t = add(t, tsa_forward(m, b, t, opts));
        t = add(t, tmlp_forward(m, b, t, opts));
      }
      return global_avg_pool(relu(t));
    };
    CHECK(max_abs_diff(blocks(x), blocks(px)) <= 1e-12);
  }

  TEST_CASE("non-finite intermediates name the layer") {
    const auto c = testing::tiny_config();
    TailoredModel m = build_model(c, 1);
    m.blocks[0].key.weight[0] = INFINITY;
    try {
      forward(m, random_images(c, 1, 1)[0], ActivationMode::Float);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("blk0.k") != std::string::npos);
    }
    CHECK_THROWS_AS(forward(m, Tensor(Shape{1, 4, 4}), ActivationMode::Float), ShapeError);
  }

  TEST_CASE("quant mode requires calibrated steps") {
    const auto c = testing::tiny_config();
    TailoredModel m = build_model(c, 1);
    m.quantizers.erase("blk0.v");
    CHECK_THROWS_AS(forward(m, random_images(c, 1, 1)[0], ActivationMode::Quant), ConfigError);
  }

  TEST_CASE("calibration rules") {
    const auto c = testing::tiny_config();
    TailoredModel m = build_model(c, 3);
    const auto imgs = random_images(c, 2, 5);
    // MeanAbs: s = 2 E|x| / sqrt(L) on the first site, which sees the first BN output.
    calibrate_quantizers(m, imgs, CalibrationRule::MeanAbs);
    double abs_sum = 0.0, abs_max = 0.0;
    std::size_t n = 0;
    ForwardOptions probe;
    probe.mode = ActivationMode::Quant;
    probe.observer = [&](std::string_view site, const Tensor& in, const Tensor&) {
      if (site != "tok0.act") return;
      for (double v : in.data()) {
        abs_sum += std::abs(v);
        abs_max = std::max(abs_max, std::abs(v));
      }
      n += in.size();
    };
    for (const auto& img : imgs) forward(m, img, probe);
    CHECK(m.quantizers.at("tok0.act").step == doctest::Approx(2.0 * abs_sum / n / 2.0).epsilon(1e-12));
    calibrate_quantizers(m, imgs, CalibrationRule::Range);
    CHECK(m.quantizers.at("tok0.act").step == doctest::Approx(abs_max / 4.0).epsilon(1e-12));
    CHECK_THROWS_AS(calibrate_quantizers(m, {}, CalibrationRule::Range), ConfigError);
  }

  TEST_CASE("fit_batch_norms matches observed statistics") {
    const auto c = testing::tiny_config();
    TailoredModel m = build_model(c, 2);
    const auto imgs = random_images(c, 3, 3);
    fit_batch_norms(m, imgs);
    // After fitting, the first BN output has zero mean and variance var / (var + eps) per channel.
    ForwardOptions opts;
    std::vector<double> s1(8, 0.0), s2(8, 0.0);
    std::size_t count = 0;
    opts.observer = [&](std::string_view site, const Tensor& in, const Tensor&) {
      if (site != "tok0.act") return;
      const std::size_t plane = in.size() / 8;
      for (std::size_t i = 0; i < in.size(); ++i) {
        s1[i / plane] += in[i];
        s2[i / plane] += in[i] * in[i];
      }
      count += plane;
    };
    for (const auto& img : imgs) forward(m, img, opts);
    for (std::size_t ch = 0; ch < 8; ++ch) {
      const double mean = s1[ch] / count;
      CHECK(std::abs(mean) <= 1e-9);
      const auto& bn = *m.tokenizer[0].bn;
      CHECK(bn.var[ch] > 0.0);
      CHECK(s2[ch] / count - mean * mean == doctest::Approx(bn.var[ch] / (bn.var[ch] + bn.eps)).epsilon(1e-9));
    }
  }
}
