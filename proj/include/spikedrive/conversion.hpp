// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spikedrive/model.hpp"

namespace spikedrive {

enum class NeuronKind { Conv, Linear, AttentionScore, AttentionOutput, PoolPassthrough };

std::string_view to_string(NeuronKind kind);
std::optional<NeuronKind> parse_neuron_kind(std::string_view name);

struct Presynaptic {
  std::string site;
  double threshold = 0.0;
  bool operator==(const Presynaptic&) const = default;
};

/// One spiking layer replacing one activation site.
///
/// `threshold` is the clipping threshold s * L; it is also the weight each
/// emitted spike carries downstream. `firing_threshold` is what the membrane
/// potential is compared against: the threshold divided by every constant
/// scale the layer's input would otherwise need (1/(N sqrt(d_k)) and the 1/T
/// factors of temporally decomposed products).
struct NeuronLayer {
  std::string site;
  NeuronKind kind = NeuronKind::Linear;
  double threshold = 0.0;
  double firing_threshold = 0.0;
  double absorbed_scale = 1.0;
  std::vector<Presynaptic> presynaptic;
  bool operator==(const NeuronLayer&) const = default;
};

enum class TdecKind { MaxPool, Vmm };

std::string_view to_string(TdecKind kind);
std::optional<TdecKind> parse_tdec_kind(std::string_view name);

/// A max-pool or variable-matrix-multiply node executed as a temporal
/// decomposition. For max-pool, `lhs` is the neuron layer being pooled; for
/// VMM, `lhs` x `rhs` are the two spiking operands (the right one transposed
/// for the query-key product).
struct TdecSite {
  TdecKind kind = TdecKind::MaxPool;
  std::string name;
  std::string lhs, rhs;
  PoolSpec pool;
  bool operator==(const TdecSite&) const = default;
};

struct SpikingModel {
  TailoredModel network;  // BN-free
  int time_window = 0;    // T
  std::vector<NeuronLayer> neurons;
  std::vector<TdecSite> tdec_sites;

  const NeuronLayer& neuron(std::string_view site) const;
  const TdecSite* tdec(std::string_view name) const;
};

namespace tdec_names {
std::string maxpool(std::size_t stage);
std::string query_key(std::size_t block);
std::string score_value(std::size_t block);
}  // namespace tdec_names

/// theta / delta
double absorb_scale(double threshold, double delta);

/// Fold every BN into its preceding conv/linear layer.
TailoredModel fold_all_bn(const TailoredModel& model);

/// Map each quantizer to a neuron layer: T = L, theta = s * L, then absorb
/// constant scales into firing thresholds. Requires a BN-free model.
SpikingModel map_thresholds(const TailoredModel& folded);

/// Attach a TDEC annotation to every max-pool and both VMMs of each block.
SpikingModel annotate_tdec(SpikingModel model);

/// fold_all_bn, map_thresholds, annotate_tdec.
SpikingModel convert(const TailoredModel& model);

}  // namespace spikedrive
