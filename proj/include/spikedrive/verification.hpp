// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikedrive/conversion.hpp"
#include "spikedrive/spike_engine.hpp"

namespace spikedrive {

/// Randomized exactness checks of both temporal decompositions against dense
/// oracles. Stops at the first mismatch.
struct TdecReport {
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::size_t vmm_checked = 0;
  std::size_t maxpool_checked = 0;
  std::string failure;  // empty when every trial was exact
  double seconds = 0.0;

  bool passed() const { return failure.empty() && vmm_checked == trials && maxpool_checked == trials; }
  bool operator==(const TdecReport&) const = default;
};

/// Operands up to 8x16 . 16x8 and pooling inputs up to 4x8x8, T in [1, 8].
TdecReport check_tdec_properties(std::size_t trials, std::uint64_t seed);

/// Full-delay DIF identity: total spikes == clip(floor(z / theta + 1/2), 0, T).
/// Half of the cases use dyadic thresholds and charges so the expected count
/// is computed in exact integer arithmetic; the rest are generic reals.
struct DifReport {
  std::size_t cases = 0;
  std::uint64_t seed = 0;
  std::size_t exact_cases = 0;  // dyadic
  std::size_t mismatches = 0;
  std::string first_mismatch;

  bool passed() const { return mismatches == 0 && cases > 0; }
  bool operator==(const DifReport&) const = default;
};

DifReport check_dif_identity(std::size_t cases, std::uint64_t seed, int max_time_window = 8);

struct SiteError {
  std::string site;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;  // max_abs_error / max |ANN activation|
  bool operator==(const SiteError&) const = default;
};

/// SNN against its source quantized ANN over a batch. Per-site errors
/// compare the time-averaged spike output (count * theta / T) with the ANN
/// site output.
struct EquivalenceReport {
  int delay = 0;
  int time_window = 0;
  std::size_t images = 0;
  std::vector<SiteError> sites;
  double logit_max_abs_error = 0.0;
  double logit_mean_abs_error = 0.0;
  double logit_max_rel_error = 0.0;  // per image ||d||_inf / ||ann||_inf, maximized
  double top1_agreement = 0.0;
  SpikeStats spikes;

  bool passed(double rel_tolerance = 1e-6) const {
    return logit_max_rel_error <= rel_tolerance && top1_agreement == 1.0;
  }
  bool operator==(const EquivalenceReport&) const = default;
};

/// Throws MismatchError if `snn` was not converted from a model with the
/// configuration and quantizer table of `ann`.
EquivalenceReport compare_ann_snn(const TailoredModel& ann, const SpikingModel& snn,
                                  std::span<const Tensor> images, int delay);

struct AnnAgreement {
  std::size_t images = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  double top1_agreement = 0.0;
  bool operator==(const AnnAgreement&) const = default;
};

/// Two ANN forwards on the same images, e.g. folded vs unfolded or absorbed
/// vs explicit score scaling.
AnnAgreement compare_ann(const TailoredModel& a, const ForwardOptions& opts_a, const TailoredModel& b,
                         const ForwardOptions& opts_b, std::span<const Tensor> images);

struct DelayPoint {
  int delay = 0;
  double mean_logit_error = 0.0;
  double max_rel_error = 0.0;
  double top1_agreement = 0.0;
  bool operator==(const DelayPoint&) const = default;
};

struct DelaySweepResult {
  int time_window = 0;
  std::size_t images = 0;
  std::vector<DelayPoint> points;
  bool non_increasing = false;
  /// |err(max delay) - err(T)| <= 1e-3; only meaningful if T was swept.
  bool saturated = false;
  /// Smallest swept delay from which every later error is within 1e-3 of
  /// err(T); -1 if T was not swept.
  int saturation_delay = -1;
  bool operator==(const DelaySweepResult&) const = default;
};

inline constexpr double kSaturationTolerance = 1e-3;
/// Slack for the non-increasing check: differences below this are rounding.
inline constexpr double kMonotoneSlack = 1e-12;

/// `delays` must be strictly increasing (ContractViolation otherwise).
DelaySweepResult sweep_delay(const TailoredModel& ann, const SpikingModel& snn,
                             std::span<const Tensor> images, std::span<const int> delays);

/// Per-layer spike table accumulated over a batch.
SpikeStats spike_stats(const SpikingModel& snn, std::span<const Tensor> images, int delay);

// Structured-text forms. from_json(to_json(x)) == x.
nlohmann::json to_json(const TdecReport& r);
nlohmann::json to_json(const DifReport& r);
nlohmann::json to_json(const EquivalenceReport& r);
nlohmann::json to_json(const AnnAgreement& r);
nlohmann::json to_json(const DelaySweepResult& r);
nlohmann::json to_json(const SpikeStats& s);

TdecReport tdec_report_from_json(const nlohmann::json& j);
DifReport dif_report_from_json(const nlohmann::json& j);
EquivalenceReport equivalence_report_from_json(const nlohmann::json& j);
AnnAgreement ann_agreement_from_json(const nlohmann::json& j);
DelaySweepResult delay_sweep_from_json(const nlohmann::json& j);
SpikeStats spike_stats_from_json(const nlohmann::json& j);

}  // namespace spikedrive
