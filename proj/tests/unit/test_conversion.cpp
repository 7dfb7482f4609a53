// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "../helpers.hpp"
#include "spikedrive/conversion.hpp"
#include "spikedrive/errors.hpp"
#include "spikedrive/verification.hpp"

using namespace spikedrive;

namespace {

// Two tokens, two heads of width four.
ModelConfig two_token_config() {
  ModelConfig c;
  c.channels = 1;
  c.height = 1;
  c.width = 2;
  c.conv_blocks = {{8, false}};
  c.embed_dim = 8;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.classes = 3;
  c.quant_levels = 4;
  return c;
}

TailoredModel random_affine(const ModelConfig& c, std::uint64_t seed) {
  TailoredModel m = build_model(c, seed);
  randomize_affine_parameters(m, seed + 1);
  calibrate_quantizers(m, random_images(c, 4, seed + 2));
  return m;
}

}  // namespace

TEST_SUITE("conversion") {
  TEST_CASE("threshold is s * L and T is L") {
    const auto c = two_token_config();
    TailoredModel m = build_model(c, 1);
    for (auto& [site, q] : m.quantizers) q.step = 0.25;
    const SpikingModel sm = convert(m);
    CHECK(sm.time_window == 4);
    CHECK(sm.neurons.size() == m.quantizers.size());
    for (const auto& n : sm.neurons) CHECK(n.threshold == 1.0);
    CHECK(sm.neuron("blk0.q").firing_threshold == 1.0);
    CHECK(sm.neuron("blk0.q").kind == NeuronKind::Linear);
    CHECK(sm.neuron("tok0.act").kind == NeuronKind::Conv);
    // 1 * N * sqrt(d_k) * T = 1 * 2 * 2 * 4
    CHECK(sm.neuron("blk0.score").firing_threshold == doctest::Approx(16.0).epsilon(1e-15));
    CHECK(sm.neuron("blk0.score").kind == NeuronKind::AttentionScore);
    CHECK(sm.neuron("blk0.attn").firing_threshold == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(sm.neuron("blk0.attn").kind == NeuronKind::AttentionOutput);
    const auto& pre = sm.neuron("blk0.score").presynaptic;
    REQUIRE(pre.size() == 2);
    CHECK(pre[0] == Presynaptic{"blk0.q", 1.0});
    CHECK(pre[1] == Presynaptic{"blk0.k", 1.0});
    CHECK_THROWS_AS(sm.neuron("nope"), ConversionError);
  }

  TEST_CASE("absorb_scale") {
    CHECK(absorb_scale(1.0, 1.0 / 32.0) == 32.0);
    CHECK(absorb_scale(3.0, 1.0) == 3.0);
    CHECK_THROWS_AS(absorb_scale(1.0, 0.0), ConversionError);
  }

  TEST_CASE("name round trips") {
    for (auto k : {NeuronKind::Conv, NeuronKind::Linear, NeuronKind::AttentionScore, NeuronKind::AttentionOutput,
                   NeuronKind::PoolPassthrough})
      CHECK(parse_neuron_kind(to_string(k)) == k);
    CHECK_FALSE(parse_neuron_kind("softmax").has_value());
    CHECK(parse_tdec_kind(to_string(TdecKind::Vmm)) == TdecKind::Vmm);
    CHECK(parse_tdec_kind(to_string(TdecKind::MaxPool)) == TdecKind::MaxPool);
    CHECK_FALSE(parse_tdec_kind("conv").has_value());
  }

  TEST_CASE("folding identity BN with zero eps leaves weights unchanged") {
    const auto c = testing::tiny_config();
    TailoredModel m = build_model(c, 3);
    m.tokenizer[0].bn->eps = 0.0;
    for (auto& blk : m.blocks)
      for (Dense* d : {&blk.query, &blk.key, &blk.value, &blk.proj, &blk.fc1, &blk.fc2}) d->bn->eps = 0.0;
    const TailoredModel f = fold_all_bn(m);
    CHECK(f.batch_norm_count() == 0);
    CHECK(f.tokenizer[0].conv.kernel == m.tokenizer[0].conv.kernel);
    CHECK(f.blocks[0].fc2.weight == m.blocks[0].fc2.weight);
    CHECK(f.blocks[0].fc2.bias == m.blocks[0].fc2.bias);
  }

  TEST_CASE("folding preserves the quantized network") {
    const auto c = testing::small_config();
    const TailoredModel m = random_affine(c, 11);
    const TailoredModel f = fold_all_bn(m);
    CHECK(m.batch_norm_count() == 2 + 6 * 2);
    CHECK(f.batch_norm_count() == 0);
    ForwardOptions quant;
    quant.mode = ActivationMode::Quant;
    const auto images = random_images(c, 20, 5);
    const AnnAgreement q = compare_ann(m, quant, f, quant, images);
    CHECK(q.max_rel_error <= 1e-10);
    CHECK(q.top1_agreement == 1.0);
    const AnnAgreement fl = compare_ann(m, ForwardOptions{}, f, ForwardOptions{}, images);
    CHECK(fl.max_rel_error <= 1e-10);
  }

  TEST_CASE("absorbed score scaling matches explicit") {
    const auto c = testing::small_config();
    const TailoredModel m = fold_all_bn(random_affine(c, 12));
    ForwardOptions explicit_opts, absorbed;
    explicit_opts.mode = absorbed.mode = ActivationMode::Quant;
    absorbed.score_scaling = ScoreScaling::Absorbed;
    const AnnAgreement r = compare_ann(m, explicit_opts, m, absorbed, random_images(c, 20, 6));
    CHECK(r.max_rel_error <= 1e-10);
    CHECK(r.top1_agreement == 1.0);
  }

  TEST_CASE("TDEC annotations") {
    const auto c = testing::small_config();
    const SpikingModel sm = convert(build_model(c, 1));
    std::size_t pools = 0, vmms = 0;
    for (const auto& s : sm.tdec_sites) (s.kind == TdecKind::MaxPool ? pools : vmms)++;
    CHECK(pools == 2);
    CHECK(vmms == 2 * c.blocks);
    REQUIRE(sm.tdec("blk1.qk") != nullptr);
    CHECK(sm.tdec("blk1.qk")->lhs == "blk1.q");
    CHECK(sm.tdec("blk1.qk")->rhs == "blk1.k");
    CHECK(sm.tdec("blk1.av")->lhs == "blk1.score");
    CHECK(sm.tdec("tok1.pool")->lhs == "tok1.act");
    CHECK(sm.tdec("tok2.pool") == nullptr);

    ModelConfig deep = c;
    deep.height = deep.width = 32;
    deep.conv_blocks = {{8, true}, {16, true}, {16, true}, {32, true}};
    CHECK(convert(build_model(deep, 1)).tdec_sites.size() == 4 + 2 * deep.blocks);

    SpikingModel broken = sm;
    broken.neurons.erase(broken.neurons.begin() + 3);
    CHECK_THROWS_AS(annotate_tdec(broken), ConversionError);
  }

  TEST_CASE("conversion errors") {
    const auto c = testing::tiny_config();
    TailoredModel m = build_model(c, 1);
    CHECK_THROWS_AS(map_thresholds(m), ConversionError);
    TailoredModel f = fold_all_bn(m);
    f.quantizers.at("blk0.v").levels = 8;
    try {
      map_thresholds(f);
      FAIL("expected ConversionError");
    } catch (const ConversionError& e) {
      CHECK(std::string(e.what()).find("blk0.v") != std::string::npos);
    }
    f = fold_all_bn(m);
    f.quantizers.erase("head.in");
    CHECK_THROWS_AS(map_thresholds(f), ConversionError);
    f = fold_all_bn(m);
    f.quantizers.at("blk0.k").step = 0.0;
    CHECK_THROWS_AS(convert(f), ConversionError);
  }
}
