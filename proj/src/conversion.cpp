// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikedrive/conversion.hpp"

#include <algorithm>
#include <cmath>

#include "spikedrive/errors.hpp"

namespace spikedrive {

std::string_view to_string(NeuronKind kind) {
  switch (kind) {
    case NeuronKind::Conv: return "conv";
    case NeuronKind::Linear: return "linear";
    case NeuronKind::AttentionScore: return "attention-score";
    case NeuronKind::AttentionOutput: return "attention-output";
    case NeuronKind::PoolPassthrough: return "pool-passthrough";
  }
  return "unknown";
}

std::optional<NeuronKind> parse_neuron_kind(std::string_view name) {
  for (auto k : {NeuronKind::Conv, NeuronKind::Linear, NeuronKind::AttentionScore,
                 NeuronKind::AttentionOutput, NeuronKind::PoolPassthrough}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(TdecKind kind) {
  switch (kind) {
    case TdecKind::MaxPool: return "maxpool";
    case TdecKind::Vmm: return "vmm";
  }
  return "unknown";
}

std::optional<TdecKind> parse_tdec_kind(std::string_view name) {
  if (name == "maxpool") return TdecKind::MaxPool;
  if (name == "vmm") return TdecKind::Vmm;
  return std::nullopt;
}

const NeuronLayer& SpikingModel::neuron(std::string_view site) const {
  auto it = std::find_if(neurons.begin(), neurons.end(),
                         [&](const NeuronLayer& n) { return n.site == site; });
  if (it == neurons.end()) throw ConversionError("no neuron layer for site " + std::string(site));
  return *it;
}

const TdecSite* SpikingModel::tdec(std::string_view name) const {
  auto it = std::find_if(tdec_sites.begin(), tdec_sites.end(),
                         [&](const TdecSite& s) { return s.name == name; });
  return it == tdec_sites.end() ? nullptr : &*it;
}

namespace tdec_names {
std::string maxpool(std::size_t stage) { return "tok" + std::to_string(stage) + ".pool"; }
std::string query_key(std::size_t block) { return "blk" + std::to_string(block) + ".qk"; }
std::string score_value(std::size_t block) { return "blk" + std::to_string(block) + ".av"; }
}  // namespace tdec_names

double absorb_scale(double threshold, double delta) {
  if (!(delta > 0.0)) throw ConversionError("absorbed scale must be positive");
  return threshold / delta;
}

TailoredModel fold_all_bn(const TailoredModel& model) {
  TailoredModel out = model;
  for (auto& stage : out.tokenizer) {
    if (!stage.bn) continue;
    auto [w, b] = fold_bn(stage.conv.kernel, stage.conv.bias, *stage.bn);
    stage.conv.kernel = std::move(w);
    stage.conv.bias = std::move(b);
    stage.bn.reset();
  }
  auto fold_dense = [](Dense& d) {
    if (!d.bn) return;
    auto [w, b] = fold_bn(d.weight, d.bias, *d.bn);
    d.weight = std::move(w);
    d.bias = std::move(b);
    d.bn.reset();
  };
  for (auto& blk : out.blocks) {
    for (Dense* d : {&blk.query, &blk.key, &blk.value, &blk.proj, &blk.fc1, &blk.fc2}) fold_dense(*d);
  }
  fold_dense(out.head);
  return out;
}

SpikingModel map_thresholds(const TailoredModel& folded) {
  if (folded.batch_norm_count() != 0) {
    throw ConversionError("map_thresholds needs a BN-free model; fold batch norms first");
  }
  const auto& cfg = folded.config;
  const int levels = cfg.quant_levels;

  auto theta_of = [&](const std::string& site) {
    auto it = folded.quantizers.find(site);
    if (it == folded.quantizers.end()) throw ConversionError("quantizer site " + site + " is missing");
    const QuantParams& q = it->second;
    if (!(q.step > 0.0)) throw ConversionError("quantizer site " + site + " has step <= 0");
    if (q.levels != levels) {
      throw ConversionError("quantizer site " + site + " has " + std::to_string(q.levels) +
                            " levels, model time window is " + std::to_string(levels));
    }
    return q.clip();
  };

  SpikingModel sm;
  sm.network = folded;
  sm.time_window = levels;
  const double t = static_cast<double>(levels);
  const double n = static_cast<double>(cfg.tokens());
  const double sqrt_dk = std::sqrt(static_cast<double>(cfg.head_dim()));

  auto add = [&](const std::string& site, NeuronKind kind, double delta,
                 std::vector<std::string> inputs) {
    NeuronLayer layer;
    layer.site = site;
    layer.kind = kind;
    layer.threshold = theta_of(site);
    layer.absorbed_scale = delta;
    layer.firing_threshold = absorb_scale(layer.threshold, delta);
    for (auto& in : inputs) layer.presynaptic.push_back({in, theta_of(in)});
    sm.neurons.push_back(std::move(layer));
  };

  for (std::size_t i = 0; i < cfg.conv_blocks.size(); ++i) {
    std::vector<std::string> inputs;
    if (i > 0) inputs.push_back(sites::tokenizer(i - 1));
    add(sites::tokenizer(i), NeuronKind::Conv, 1.0, std::move(inputs));
  }

  // Spiking layers whose weighted output currents make up the residual stream.
  std::vector<std::string> residual{sites::tokenizer(cfg.conv_blocks.size() - 1)};
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    add(sites::block_input(b), NeuronKind::Linear, 1.0, residual);
    add(sites::query(b), NeuronKind::Linear, 1.0, {sites::block_input(b)});
    add(sites::key(b), NeuronKind::Linear, 1.0, {sites::block_input(b)});
    add(sites::value(b), NeuronKind::Linear, 1.0, {sites::block_input(b)});
    // Score currents sum to T^2 * (Q K^T); one 1/T is the usual charge
    // convention, the other plus 1/(N sqrt(d_k)) is absorbed here.
    add(sites::score(b), NeuronKind::AttentionScore, 1.0 / (n * sqrt_dk * t),
        {sites::query(b), sites::key(b)});
    add(sites::attention(b), NeuronKind::AttentionOutput, 1.0 / t,
        {sites::score(b), sites::value(b)});
    residual.push_back(sites::attention(b));
    add(sites::mlp_input(b), NeuronKind::Linear, 1.0, residual);
    add(sites::mlp_hidden(b), NeuronKind::Linear, 1.0, {sites::mlp_input(b)});
    residual.push_back(sites::mlp_hidden(b));
  }
  add(sites::head(), NeuronKind::Linear, 1.0, residual);
  return sm;
}

SpikingModel annotate_tdec(SpikingModel model) {
  const auto& cfg = model.network.config;
  // Operands must be existing neuron layers; this also rejects models whose
  // layer table contains kinds the engine cannot schedule.
  auto require_neuron = [&](const std::string& site, std::initializer_list<NeuronKind> kinds) {
    auto it = std::find_if(model.neurons.begin(), model.neurons.end(),
                           [&](const NeuronLayer& n) { return n.site == site; });
    if (it == model.neurons.end()) throw ConversionError("TDEC operand " + site + " is not a neuron layer");
    if (std::find(kinds.begin(), kinds.end(), it->kind) == kinds.end()) {
      throw ConversionError("TDEC operand " + site + " has unsupported node kind " +
                            std::string(to_string(it->kind)));
    }
  };

  model.tdec_sites.clear();
  for (std::size_t i = 0; i < cfg.conv_blocks.size(); ++i) {
    if (i >= model.network.tokenizer.size()) throw ConversionError("tokenizer stage count mismatch");
    if (!model.network.tokenizer[i].maxpool) continue;
    require_neuron(sites::tokenizer(i), {NeuronKind::Conv});
    model.tdec_sites.push_back({TdecKind::MaxPool, tdec_names::maxpool(i), sites::tokenizer(i), "", PoolSpec{}});
  }
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    require_neuron(sites::query(b), {NeuronKind::Linear});
    require_neuron(sites::key(b), {NeuronKind::Linear});
    require_neuron(sites::score(b), {NeuronKind::AttentionScore});
    require_neuron(sites::value(b), {NeuronKind::Linear});
    model.tdec_sites.push_back({TdecKind::Vmm, tdec_names::query_key(b), sites::query(b), sites::key(b), PoolSpec{}});
    model.tdec_sites.push_back({TdecKind::Vmm, tdec_names::score_value(b), sites::score(b), sites::value(b), PoolSpec{}});
  }
  return model;
}

SpikingModel convert(const TailoredModel& model) {
  return annotate_tdec(map_thresholds(fold_all_bn(model)));
}

}  // namespace spikedrive
