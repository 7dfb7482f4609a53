// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikedrive/spike_engine.hpp"

#include <algorithm>

#include "spikedrive/errors.hpp"
#include "spikedrive/kernels.hpp"

namespace spikedrive {

Tensor SpikeTrain::total() const {
  Tensor acc(shape());
  for (const auto& s : steps) kernels::active().add_inplace(s.raw(), acc.raw(), acc.size());
  return acc;
}

bool is_binary(const Tensor& x) {
  return std::all_of(x.data().begin(), x.data().end(), [](double v) { return v == 0.0 || v == 1.0; });
}

double LayerSpikeStats::rate() const {
  const double denom = static_cast<double>(neurons) * static_cast<double>(per_step.size()) *
                       static_cast<double>(samples);
  return denom > 0.0 ? static_cast<double>(total) / denom : 0.0;
}

void SpikeStats::merge(const SpikeStats& other) {
  if (layers.empty() && images == 0) {
    *this = other;
    return;
  }
  if (other.layers.size() != layers.size() || other.time_window != time_window || other.delay != delay) {
    throw MismatchError("cannot merge spike statistics of different runs");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const auto& o = other.layers[i];
    if (l.layer != o.layer || l.per_step.size() != o.per_step.size()) {
      throw MismatchError("cannot merge spike statistics of different runs");
    }
    for (std::size_t t = 0; t < l.per_step.size(); ++t) l.per_step[t] += o.per_step[t];
    l.total += o.total;
    l.samples += o.samples;
  }
  images += other.images;
}

std::uint64_t SpikeStats::total_spikes() const {
  std::uint64_t n = 0;
  for (const auto& l : layers) n += l.total;
  return n;
}

SpikeTrain dif_run(std::span<const Tensor> charges, double threshold, int delay) {
  if (!(threshold > 0.0)) throw ContractViolation("dif_run: threshold must be positive");
  if (delay < 0) throw ContractViolation("dif_run: delay must be >= 0");
  if (charges.empty()) throw ContractViolation("dif_run: need at least one charge step");
  const std::size_t steps = charges.size();
  const Shape& shape = charges.front().shape();
  for (const auto& c : charges) {
    if (c.shape() != shape) throw ShapeError("dif_run: charge steps differ in shape");
  }

  const auto& k = kernels::active();
  Tensor v(shape, threshold / 2.0);
  SpikeTrain out;
  out.steps.assign(steps, Tensor(shape));
  const std::size_t d = static_cast<std::size_t>(delay);
  for (std::size_t t = 1; t <= d + steps; ++t) {
    if (t <= steps) k.add_inplace(charges[t - 1].raw(), v.raw(), v.size());
    if (t > d) k.fire(v.raw(), threshold, out.steps[t - d - 1].raw(), v.size());
  }
  return out;
}

SpikeTrain tdec_maxpool(const SpikeTrain& input, const PoolSpec& pool) {
  if (input.length() == 0) throw ContractViolation("tdec_maxpool: empty train");
  Tensor cumulative(input.shape());
  Tensor previous;
  SpikeTrain out;
  out.steps.reserve(input.length());
  for (std::size_t t = 0; t < input.length(); ++t) {
    const Tensor& x = input.steps[t];
    if (x.shape() != input.shape()) throw ShapeError("tdec_maxpool: steps differ in shape");
    if (!is_binary(x)) {
      throw ContractViolation("tdec_maxpool: step " + std::to_string(t + 1) + " is not binary");
    }
    kernels::active().add_inplace(x.raw(), cumulative.raw(), cumulative.size());
    Tensor pooled = maxpool2d(cumulative, pool);
    out.steps.push_back(t == 0 ? pooled : subtract(pooled, previous));
    previous = std::move(pooled);
  }
  return out;
}

SpikeTrain tdec_vmm(const SpikeTrain& lhs, const SpikeTrain& rhs) {
  if (lhs.length() != rhs.length()) {
    throw ShapeError("tdec_vmm: trains have " + std::to_string(lhs.length()) + " and " +
                     std::to_string(rhs.length()) + " steps");
  }
  if (lhs.length() == 0) throw ContractViolation("tdec_vmm: empty trains");
  const Shape& ls = lhs.shape();
  const Shape& rs = rhs.shape();
  if (ls.size() != 2 || rs.size() != 2 || ls[1] != rs[0]) {
    throw ShapeError("tdec_vmm: incompatible operands " + shape_to_string(ls) + " x " +
                     shape_to_string(rs));
  }
  Tensor lhs_sum(ls), rhs_sum(rs);
  SpikeTrain out;
  out.steps.reserve(lhs.length());
  const auto& k = kernels::active();
  for (std::size_t t = 0; t < lhs.length(); ++t) {
    const Tensor& a = lhs.steps[t];
    const Tensor& b = rhs.steps[t];
    if (a.shape() != ls || b.shape() != rs) throw ShapeError("tdec_vmm: steps differ in shape");
    if (!is_binary(a) || !is_binary(b)) {
      throw ContractViolation("tdec_vmm: step " + std::to_string(t + 1) + " is not binary");
    }
    k.add_inplace(a.raw(), lhs_sum.raw(), lhs_sum.size());
    k.add_inplace(b.raw(), rhs_sum.raw(), rhs_sum.size());
    Tensor c = add(matmul(lhs_sum, b), matmul(a, rhs_sum));
    out.steps.push_back(subtract(c, matmul(a, b)));
  }
  return out;
}

LatencyReport latency_for(const ModelConfig& config, int time_window, int delay) {
  LatencyReport r;
  r.per_layer_ticks = delay + time_window;
  // Tokenizer stages, six spiking layers per block on the critical path
  // (input, q/k/v in parallel, score, attention output, mlp input, mlp
  // hidden), and the head.
  r.depth = config.conv_blocks.size() + 6 * config.blocks + 1;
  r.accumulated_ticks = r.depth * static_cast<std::size_t>(r.per_layer_ticks);
  return r;
}

namespace {

using Train = std::vector<Tensor>;

class Simulation {
 public:
  Simulation(const SpikingModel& model, int delay, const SpikeTraceObserver& trace)
      : model_(model), delay_(delay), trace_(trace), steps_(static_cast<std::size_t>(model.time_window)) {
    stats_.time_window = model.time_window;
    stats_.delay = delay;
    stats_.images = 1;
    stats_.latency = latency_for(model.network.config, model.time_window, delay);
  }

  std::size_t steps() const { return steps_; }

  SpikeTrain neuron(const std::string& site, std::span<const Tensor> charges) {
    const NeuronLayer& layer = model_.neuron(site);
    SpikeTrain s = dif_run(charges, layer.firing_threshold, delay_);
    record(site, layer.kind, s, layer.threshold);
    return s;
  }

  void record(const std::string& name, NeuronKind kind, const SpikeTrain& s, double weight) {
    LayerSpikeStats ls;
    ls.layer = name;
    ls.kind = kind;
    ls.neurons = shape_product(s.shape());
    for (const auto& step : s.steps) {
      const auto c = static_cast<std::uint64_t>(sum(step));
      ls.per_step.push_back(c);
      ls.total += c;
    }
    stats_.layers.push_back(std::move(ls));
    if (trace_) trace_(name, s, weight);
  }

  Train weighted(const SpikeTrain& s, double weight) const {
    Train out;
    out.reserve(s.length());
    for (const auto& step : s.steps) out.push_back(scale(step, weight));
    return out;
  }

  SpikeStats take_stats() { return std::move(stats_); }

 private:
  const SpikingModel& model_;
  int delay_;
  const SpikeTraceObserver& trace_;
  std::size_t steps_;
  SpikeStats stats_;
};

struct DenseT {
  Tensor weight_t;  // [in, out]
  const Tensor* bias;
  explicit DenseT(const Dense& d) : weight_t(transpose(d.weight)), bias(&d.bias) {}

  Tensor operator()(const Tensor& x) const {
    Tensor y = matmul(x, weight_t);
    const std::size_t n = y.dim(0), out = y.dim(1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out; ++j) y.at(i, j) += (*bias)[j];
    return y;
  }

  Train over(const Train& xs) const {
    Train out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back((*this)(x));
    return out;
  }
};

SpikeTrain columns(const SpikeTrain& s, std::size_t begin, std::size_t count, bool transposed) {
  SpikeTrain out;
  out.steps.reserve(s.length());
  for (const auto& step : s.steps) {
    Tensor c = column_block(step, begin, count);
    out.steps.push_back(transposed ? transpose(c) : std::move(c));
  }
  return out;
}

void add_into(Train& acc, const Train& x) {
  for (std::size_t t = 0; t < acc.size(); ++t) {
    kernels::active().add_inplace(x[t].raw(), acc[t].raw(), acc[t].size());
  }
}

double presynaptic_product(const NeuronLayer& layer) {
  if (layer.presynaptic.size() != 2) {
    throw ContractViolation("layer " + layer.site + " needs exactly two presynaptic thresholds");
  }
  return layer.presynaptic[0].threshold * layer.presynaptic[1].threshold;
}

const TdecSite& require_tdec(const SpikingModel& model, const std::string& name, TdecKind kind) {
  const TdecSite* site = model.tdec(name);
  if (site == nullptr || site->kind != kind) {
    throw ContractViolation("missing " + std::string(to_string(kind)) + " TDEC annotation " + name);
  }
  return *site;
}

}  // namespace

SnnResult run_snn(const SpikingModel& model, const Tensor& image, int delay,
                  const SpikeTraceObserver& trace) {
  if (delay < 0) throw ContractViolation("delay must be >= 0");
  if (model.time_window < 1) throw ContractViolation("time window must be >= 1");
  const TailoredModel& net = model.network;
  if (net.batch_norm_count() != 0) throw ContractViolation("spiking model still contains batch norms");
  const auto& cfg = net.config;
  if (image.shape() != Shape{cfg.channels, cfg.height, cfg.width}) {
    throw ShapeError("image " + shape_to_string(image.shape()) + " does not match config " +
                     shape_to_string({cfg.channels, cfg.height, cfg.width}));
  }

  Simulation sim(model, delay, trace);
  const std::size_t steps = sim.steps();

  // Tokenizer. The image drives the first convolution as a constant current.
  SpikeTrain spikes;
  double spike_weight = 0.0;
  for (std::size_t i = 0; i < net.tokenizer.size(); ++i) {
    const auto& stage = net.tokenizer[i];
    Train charges;
    if (i == 0) {
      charges.assign(steps, conv2d(image, stage.conv));
    } else {
      for (const auto& s : spikes.steps) charges.push_back(conv2d(scale(s, spike_weight), stage.conv));
    }
    const std::string site = sites::tokenizer(i);
    spikes = sim.neuron(site, charges);
    spike_weight = model.neuron(site).threshold;
    if (stage.maxpool) {
      const TdecSite& pool = require_tdec(model, tdec_names::maxpool(i), TdecKind::MaxPool);
      spikes = tdec_maxpool(spikes, pool.pool);
      sim.record(pool.name, NeuronKind::PoolPassthrough, spikes, spike_weight);
    }
  }

  // Residual stream as per-step currents.
  Train residual;
  for (const auto& s : spikes.steps) residual.push_back(feature_map_to_tokens(scale(s, spike_weight)));

  const std::size_t heads = cfg.heads;
  const std::size_t dk = cfg.head_dim();
  for (std::size_t b = 0; b < net.blocks.size(); ++b) {
    const auto& blk = net.blocks[b];
    const SpikeTrain in = sim.neuron(sites::block_input(b), residual);
    const Train in_cur = sim.weighted(in, model.neuron(sites::block_input(b)).threshold);
    const SpikeTrain q = sim.neuron(sites::query(b), DenseT(blk.query).over(in_cur));
    const SpikeTrain k = sim.neuron(sites::key(b), DenseT(blk.key).over(in_cur));
    const SpikeTrain v = sim.neuron(sites::value(b), DenseT(blk.value).over(in_cur));

    require_tdec(model, tdec_names::query_key(b), TdecKind::Vmm);
    require_tdec(model, tdec_names::score_value(b), TdecKind::Vmm);
    const NeuronLayer& score_layer = model.neuron(sites::score(b));
    const NeuronLayer& attn_layer = model.neuron(sites::attention(b));
    const double qk_weight = presynaptic_product(score_layer);
    const double av_weight = presynaptic_product(attn_layer);

    std::vector<SpikeTrain> score_heads;
    std::vector<Train> head_currents;
    for (std::size_t h = 0; h < heads; ++h) {
      const SpikeTrain qk = tdec_vmm(columns(q, h * dk, dk, false), columns(k, h * dk, dk, true));
      Train score_charge;
      for (const auto& c : qk.steps) score_charge.push_back(scale(c, qk_weight));
      SpikeTrain score = dif_run(score_charge, score_layer.firing_threshold, delay);
      const SpikeTrain av = tdec_vmm(score, columns(v, h * dk, dk, false));
      Train attn_charge;
      for (const auto& c : av.steps) attn_charge.push_back(scale(c, av_weight));
      head_currents.push_back(std::move(attn_charge));
      score_heads.push_back(std::move(score));
    }

    SpikeTrain score_all;
    Train attn_charge;
    for (std::size_t t = 0; t < steps; ++t) {
      std::vector<Tensor> per_head, cur;
      for (std::size_t h = 0; h < heads; ++h) {
        per_head.push_back(score_heads[h].steps[t]);
        cur.push_back(head_currents[h][t]);
      }
      score_all.steps.push_back(stack(per_head));
      attn_charge.push_back(concat_columns(cur));
    }
    sim.record(score_layer.site, score_layer.kind, score_all, score_layer.threshold);

    const SpikeTrain attn = sim.neuron(sites::attention(b), attn_charge);
    add_into(residual, DenseT(blk.proj).over(sim.weighted(attn, attn_layer.threshold)));

    const SpikeTrain m = sim.neuron(sites::mlp_input(b), residual);
    const Train m_cur = sim.weighted(m, model.neuron(sites::mlp_input(b)).threshold);
    const SpikeTrain hidden = sim.neuron(sites::mlp_hidden(b), DenseT(blk.fc1).over(m_cur));
    const Train h_cur = sim.weighted(hidden, model.neuron(sites::mlp_hidden(b)).threshold);
    add_into(residual, DenseT(blk.fc2).over(h_cur));
  }

  const SpikeTrain head_in = sim.neuron(sites::head(), residual);
  const double head_weight = model.neuron(sites::head()).threshold;
  const DenseT head(net.head);
  Tensor logits(Shape{cfg.classes});
  for (const auto& s : head_in.steps) {
    const Tensor pooled = global_avg_pool(scale(s, head_weight)).reshaped({1, cfg.embed_dim});
    const Tensor step_logits = head(pooled);
    for (std::size_t c = 0; c < cfg.classes; ++c) logits[c] += step_logits[c];
  }
  for (std::size_t c = 0; c < cfg.classes; ++c) logits[c] /= static_cast<double>(steps);

  return SnnResult{std::move(logits), sim.take_stats()};
}

}  // namespace spikedrive
