// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "../helpers.hpp"
#include "spikedrive/errors.hpp"
#include "spikedrive/verification.hpp"

using namespace spikedrive;

namespace {

template <class T, class F>
void check_round_trip(const T& value, F from_json) {
  const auto text = to_json(value).dump();
  CHECK(from_json(nlohmann::json::parse(text)) == value);
}

}  // namespace

TEST_SUITE("verification") {
  TEST_CASE("TDEC property suite") {
    const TdecReport r = check_tdec_properties(200, 7);
    CHECK(r.passed());
    CHECK(r.trials == 200);
    CHECK(r.seed == 7);
    CHECK(r.failure.empty());
    CHECK(check_tdec_properties(1, 1).passed());
    TdecReport a = check_tdec_properties(50, 1), b = check_tdec_properties(50, 1);
    a.seconds = b.seconds = 0.0;
    CHECK(a == b);
  }

  TEST_CASE("DIF identity suite") {
    const DifReport r = check_dif_identity(5000, 3);
    CHECK(r.passed());
    CHECK(r.mismatches == 0);
    CHECK(r.exact_cases == 2500);
    CHECK(check_dif_identity(1, 1, 1).passed());
  }

  TEST_CASE("equivalence report at full delay") {
    const auto c = testing::small_config();
    const TailoredModel ann = build_model(c, 4);
    const SpikingModel snn = convert(ann);
    const auto images = random_images(c, 3, 5);
    const EquivalenceReport r = compare_ann_snn(ann, snn, images, snn.time_window);
    CHECK(r.passed());
    CHECK(r.images == 3);
    CHECK(r.delay == 4);
    CHECK(r.top1_agreement == 1.0);
    CHECK(r.sites.size() == activation_sites(c).size());
    for (const auto& s : r.sites) {
      CHECK(s.max_abs_error >= 0.0);
      CHECK(s.max_rel_error <= 1e-9);
    }
    CHECK(r.spikes.images == 3);

    // Independent mean-error recomputation at a short delay.
    const EquivalenceReport low = compare_ann_snn(ann, snn, images, 0);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& img : images) {
      const Tensor a = forward(ann, img, ActivationMode::Quant);
      const Tensor s = run_snn(snn, img, 0).logits;
      for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - s[i]);
      n += a.size();
    }
    CHECK(low.logit_mean_abs_error == doctest::Approx(sum / n).epsilon(1e-12));
    CHECK(low.logit_mean_abs_error > r.logit_mean_abs_error);
  }

  TEST_CASE("mismatched artifacts are rejected") {
    const auto c = testing::tiny_config();
    const TailoredModel ann = build_model(c, 1);
    const SpikingModel snn = convert(ann);
    const auto images = random_images(c, 1, 1);
    TailoredModel other = build_model(c, 1);
    other.quantizers.at("blk0.q").step *= 2.0;
    CHECK_THROWS_AS(compare_ann_snn(other, snn, images, 4), MismatchError);
    ModelConfig wide = c;
    wide.classes = 3;
    CHECK_THROWS_AS(compare_ann_snn(build_model(wide, 1), snn, images, 4), MismatchError);
    CHECK_THROWS_AS(compare_ann(ann, {}, build_model(wide, 1), {}, images), MismatchError);
  }

  TEST_CASE("delay sweep") {
    const auto c = testing::small_config();
    const TailoredModel ann = build_model(c, 2);
    const SpikingModel snn = convert(ann);
    const auto images = random_images(c, 8, 3);
    const int delays[] = {0, 1, 2, 3, 4, 6};
    const DelaySweepResult r = sweep_delay(ann, snn, images, delays);
    REQUIRE(r.points.size() == 6);
    CHECK(r.time_window == 4);
    CHECK(r.images == 8);
    CHECK(r.non_increasing);
    CHECK(r.saturated);
    CHECK(r.saturation_delay <= 4);
    CHECK(r.points[0].mean_logit_error > 10.0 * r.points[4].mean_logit_error);
    CHECK(r.points[4].max_rel_error <= 1e-6);
    CHECK(r.points[5].mean_logit_error == r.points[4].mean_logit_error);

    const int unsorted[] = {0, 2, 2};
    CHECK_THROWS_AS(sweep_delay(ann, snn, images, unsorted), ContractViolation);
    const int short_sweep[] = {0, 1};
    CHECK(sweep_delay(ann, snn, images, short_sweep).saturation_delay == -1);
  }

  TEST_CASE("spike_stats agrees with an independent count") {
    const auto c = testing::tiny_config();
    const SpikingModel snn = convert(build_fitted_model(c, 8));
    const auto images = random_images(c, 3, 9);
    const SpikeStats s = spike_stats(snn, images, 1);
    std::uint64_t popcount = 0;
    for (const auto& img : images) {
      run_snn(snn, img, 1, [&](std::string_view, const SpikeTrain& train, double) {
        for (const auto& t : train.steps)
          for (double v : t.data()) popcount += v == 1.0;
      });
    }
    CHECK(s.total_spikes() == popcount);
    CHECK(popcount > 0);
    CHECK(s.images == 3);
    for (const auto& l : s.layers) {
      CHECK(l.samples == 3);
      CHECK(l.rate() >= 0.0);
      CHECK(l.rate() <= 1.0);
    }
    const SpikeStats none = spike_stats(snn, {}, 2);
    CHECK(none.total_spikes() == 0);
    CHECK(none.latency.per_layer_ticks == 6);
  }

  TEST_CASE("reports survive a text round trip") {
    check_round_trip(check_tdec_properties(10, 2), tdec_report_from_json);
    check_round_trip(check_dif_identity(10, 2), dif_report_from_json);
    TdecReport fail;
    fail.trials = 3;
    fail.failure = "vmm trial 2 differs";
    check_round_trip(fail, tdec_report_from_json);

    const auto c = testing::tiny_config();
    const TailoredModel ann = build_model(c, 3);
    const SpikingModel snn = convert(ann);
    const auto images = random_images(c, 2, 1);
    check_round_trip(compare_ann_snn(ann, snn, images, 1), equivalence_report_from_json);
    check_round_trip(compare_ann(ann, {}, ann, {}, images), ann_agreement_from_json);
    const int delays[] = {0, 4};
    check_round_trip(sweep_delay(ann, snn, images, delays), delay_sweep_from_json);
    check_round_trip(spike_stats(snn, images, 2), spike_stats_from_json);

    const auto j = to_json(spike_stats(snn, images, 2));
    CHECK(j.contains("total_spikes"));
    CHECK(j.at("latency").at("per_layer_ticks") == 6);
    CHECK(j.at("layers").at(0).contains("rate"));
  }
}
