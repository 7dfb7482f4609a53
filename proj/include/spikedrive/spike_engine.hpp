// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spikedrive/conversion.hpp"
#include "spikedrive/tensor.hpp"

namespace spikedrive {

/// T equally shaped tensors, one per time step. Neuron and temporal
/// max-pool outputs are binary; VMM components are small nonnegative
/// integers; currents are arbitrary reals.
struct SpikeTrain {
  std::vector<Tensor> steps;

  std::size_t length() const { return steps.size(); }
  const Shape& shape() const { return steps.at(0).shape(); }
  /// Sum over time.
  Tensor total() const;
};

bool is_binary(const Tensor& x);

/// Delayed integrate-and-fire over a layer of neurons sharing one threshold.
///
/// Runs delay + T ticks; tick t charges I(t) while t <= T and, once t > delay,
/// fires s(t - delay) = [v >= theta] with soft reset v -= theta * s. The
/// membrane starts at theta / 2. delay = 0 is the plain IF neuron.
SpikeTrain dif_run(std::span<const Tensor> charges, double threshold, int delay);

/// y(t) = MP(x_1 + ... + x_t) - MP(x_1 + ... + x_{t-1}) over [C, H, W] steps.
SpikeTrain tdec_maxpool(const SpikeTrain& input, const PoolSpec& pool = {});

/// Attn(t) = Q_t K(t) + Q(t) K_t - Q(t) K(t), with Q_t, K_t running sums.
/// Sums over time to Q_T x K_T.
SpikeTrain tdec_vmm(const SpikeTrain& lhs, const SpikeTrain& rhs);

struct LayerSpikeStats {
  std::string layer;
  NeuronKind kind = NeuronKind::Linear;
  std::size_t neurons = 0;
  std::vector<std::uint64_t> per_step;
  std::uint64_t total = 0;
  std::size_t samples = 1;  // images aggregated

  /// Spikes per step per neuron per sample.
  double rate() const;
  bool operator==(const LayerSpikeStats&) const = default;
};

/// Per-layer simulation spans delay + T ticks. `accumulated_ticks` is the
/// naive end-to-end figure if every layer on the critical path waited for the
/// previous one to finish.
struct LatencyReport {
  int per_layer_ticks = 0;
  std::size_t depth = 0;
  std::size_t accumulated_ticks = 0;
  bool operator==(const LatencyReport&) const = default;
};

struct SpikeStats {
  int time_window = 0;
  int delay = 0;
  std::size_t images = 0;
  std::vector<LayerSpikeStats> layers;
  LatencyReport latency;

  /// Accumulate another run of the same model and delay.
  void merge(const SpikeStats& other);
  std::uint64_t total_spikes() const;
  bool operator==(const SpikeStats&) const = default;
};

struct SnnResult {
  Tensor logits;
  SpikeStats stats;
};

/// Sees every spiking layer's output train in simulation order. Score layers
/// report [heads, N, N] steps. `weight` is the current each spike carries.
using SpikeTraceObserver =
    std::function<void(std::string_view layer, const SpikeTrain& train, double weight)>;

/// Layer-sequential simulation of the converted model with direct input
/// coding; logits are the time average of the head's per-step output.
SnnResult run_snn(const SpikingModel& model, const Tensor& image, int delay,
                  const SpikeTraceObserver& trace = {});

LatencyReport latency_for(const ModelConfig& config, int time_window, int delay);

}  // namespace spikedrive
