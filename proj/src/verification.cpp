// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikedrive/verification.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <random>

#include "spikedrive/errors.hpp"

namespace spikedrive {

using nlohmann::json;

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

SpikeTrain random_train(std::mt19937_64& rng, const Shape& shape, std::size_t steps, double density) {
  std::bernoulli_distribution bit(density);
  SpikeTrain s;
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor x(shape);
    for (auto& v : x.data()) v = bit(rng) ? 1.0 : 0.0;
    s.steps.push_back(std::move(x));
  }
  return s;
}

// Dense oracles on integer-valued tensors; kept separate from the kernels.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      c.at(i, j) = acc;
    }
  return c;
}

Tensor naive_maxpool(const Tensor& x) {
  const std::size_t c = x.dim(0), oh = x.dim(1) / 2, ow = x.dim(2) / 2;
  Tensor out(Shape{c, oh, ow});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t z = 0; z < ow; ++z) {
        double m = x.at(ci, 2 * y, 2 * z);
        m = std::max({m, x.at(ci, 2 * y + 1, 2 * z), x.at(ci, 2 * y, 2 * z + 1), x.at(ci, 2 * y + 1, 2 * z + 1)});
        out.at(ci, y, z) = m;
      }
  return out;
}

Tensor plain_sum(const SpikeTrain& s) {
  Tensor acc(s.shape());
  for (const auto& step : s.steps)
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += step[i];
  return acc;
}

bool nonnegative_integers(const Tensor& x) {
  return std::all_of(x.data().begin(), x.data().end(),
                     [](double v) { return v >= 0.0 && v == std::floor(v); });
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::uint64_t count_spikes(const SpikeTrain& s) {
  std::uint64_t n = 0;
  for (const auto& step : s.steps)
    for (double v : step.data()) n += v != 0.0 ? 1 : 0;
  return n;
}

}  // namespace

TdecReport check_tdec_properties(std::size_t trials, std::uint64_t seed) {
  if (trials < 1) throw ContractViolation("check_tdec_properties: trials must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  TdecReport r;
  r.trials = trials;
  r.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> density(0.0, 1.0);

  for (std::size_t i = 0; i < trials && r.failure.empty(); ++i) {
    const std::size_t steps = uniform_index(rng, 1, 8);
    // Every tenth trial uses all-ones trains, the densest legal input.
    const double p = i % 10 == 9 ? 1.0 : density(rng);
    const std::size_t m = uniform_index(rng, 1, 8), k = uniform_index(rng, 1, 16), n = uniform_index(rng, 1, 8);
    const SpikeTrain q = random_train(rng, {m, k}, steps, p);
    const SpikeTrain kt = random_train(rng, {k, n}, steps, p);
    const SpikeTrain attn = tdec_vmm(q, kt);
    for (std::size_t t = 0; t < steps; ++t) {
      if (!nonnegative_integers(attn.steps[t])) {
        r.failure = "vmm trial " + std::to_string(i) + ": component " + std::to_string(t + 1) +
                    " is not a nonnegative integer";
        break;
      }
    }
    if (!r.failure.empty()) break;
    if (plain_sum(attn) != naive_matmul(plain_sum(q), plain_sum(kt))) {
      r.failure = "vmm trial " + std::to_string(i) + ": sum of components differs from Q_T x K_T";
      break;
    }
    ++r.vmm_checked;

    const std::size_t c = uniform_index(rng, 1, 4);
    const std::size_t h = 2 * uniform_index(rng, 1, 4), w = 2 * uniform_index(rng, 1, 4);
    const SpikeTrain x = random_train(rng, {c, h, w}, steps, p);
    const SpikeTrain y = tdec_maxpool(x);
    for (std::size_t t = 0; t < steps; ++t) {
      if (!is_binary(y.steps[t])) {
        r.failure = "maxpool trial " + std::to_string(i) + ": output step " + std::to_string(t + 1) +
                    " is not binary";
        break;
      }
    }
    if (!r.failure.empty()) break;
    if (plain_sum(y) != naive_maxpool(plain_sum(x))) {
      r.failure = "maxpool trial " + std::to_string(i) + ": sum of outputs differs from MP(x_T)";
      break;
    }
    ++r.maxpool_checked;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

DifReport check_dif_identity(std::size_t cases, std::uint64_t seed, int max_time_window) {
  if (max_time_window < 1) throw ContractViolation("check_dif_identity: time window must be >= 1");
  DifReport r;
  r.cases = cases;
  r.seed = seed;
  std::mt19937_64 rng(seed);
  constexpr double kUnit = 1.0 / 1024.0;  // dyadic grid; sums stay exact
  std::uniform_int_distribution<int> window(1, max_time_window);
  std::uniform_int_distribution<std::int64_t> dyadic_theta(1, 2048), dyadic_charge(-4096, 4096);
  std::uniform_real_distribution<double> real_theta(0.05, 4.0);
  std::normal_distribution<double> real_charge(0.3, 1.5);

  for (std::size_t i = 0; i < cases; ++i) {
    const int steps = window(rng);
    const bool dyadic = i % 2 == 0;
    double theta;
    double expected;
    std::vector<Tensor> charges;
    if (dyadic) {
      const std::int64_t theta_units = dyadic_theta(rng);
      theta = static_cast<double>(theta_units) * kUnit;
      std::int64_t z = 0;
      for (int t = 0; t < steps; ++t) {
        const std::int64_t c = dyadic_charge(rng);
        z += c;
        charges.push_back(Tensor::scalar(static_cast<double>(c) * kUnit));
      }
      // floor(z / theta + 1/2) == floor((2z + theta) / (2 theta))
      const std::int64_t n = floor_div(2 * z + theta_units, 2 * theta_units);
      expected = static_cast<double>(std::clamp<std::int64_t>(n, 0, steps));
      ++r.exact_cases;
    } else {
      theta = real_theta(rng) * (i % 4 == 1 ? 1.0 : 1e-2);
      double z = 0.0;
      for (int t = 0; t < steps; ++t) {
        const double c = real_charge(rng) * theta;
        z += c;
        charges.push_back(Tensor::scalar(c));
      }
      expected = std::clamp(std::floor(z / theta + 0.5), 0.0, static_cast<double>(steps));
    }
    const SpikeTrain s = dif_run(charges, theta, steps);
    const double got = static_cast<double>(count_spikes(s));
    if (got != expected) {
      if (r.mismatches == 0) {
        r.first_mismatch = "case " + std::to_string(i) + (dyadic ? " (dyadic)" : " (real)") +
                           ": T=" + std::to_string(steps) + " theta=" + std::to_string(theta) +
                           " spikes=" + std::to_string(got) + " expected=" + std::to_string(expected);
      }
      ++r.mismatches;
    }
  }
  return r;
}

EquivalenceReport compare_ann_snn(const TailoredModel& ann, const SpikingModel& snn,
                                  std::span<const Tensor> images, int delay) {
  if (!(snn.network.config == ann.config)) throw MismatchError("ANN and SNN configurations differ");
  if (snn.time_window != ann.config.quant_levels) {
    throw MismatchError("SNN time window " + std::to_string(snn.time_window) +
                        " differs from ANN quantization level " + std::to_string(ann.config.quant_levels));
  }
  for (const auto& [site, q] : ann.quantizers) {
    auto it = snn.network.quantizers.find(site);
    if (it == snn.network.quantizers.end() || !(it->second == q)) {
      throw MismatchError("quantizer site " + site + " differs between ANN and SNN");
    }
  }
  if (snn.network.quantizers.size() != ann.quantizers.size()) {
    throw MismatchError("ANN and SNN quantizer tables differ in size");
  }

  EquivalenceReport r;
  r.delay = delay;
  r.time_window = snn.time_window;
  r.images = images.size();
  const auto order = activation_sites(ann.config);
  std::map<std::string, SiteError> errs;
  std::map<std::string, double> ann_scale;
  std::size_t agree = 0;
  double abs_sum = 0.0;
  std::size_t abs_count = 0;
  const double steps = static_cast<double>(snn.time_window);

  for (const auto& image : images) {
    std::map<std::string, Tensor> ann_out;
    ForwardOptions opts;
    opts.mode = ActivationMode::Quant;
    opts.observer = [&](std::string_view site, const Tensor&, const Tensor& out) {
      ann_out[std::string(site)] = out;
    };
    const Tensor a = forward(ann, image, opts);

    SnnResult res = run_snn(snn, image, delay, [&](std::string_view layer, const SpikeTrain& train, double w) {
      auto it = ann_out.find(std::string(layer));
      if (it == ann_out.end()) return;
      Tensor avg = scale(train.total(), w / steps);
      auto& e = errs[it->first];
      e.site = it->first;
      e.max_abs_error = std::max(e.max_abs_error, max_abs_diff(avg, it->second));
      auto& sc = ann_scale[it->first];
      sc = std::max(sc, max_abs(it->second));
    });

    const double diff = max_abs_diff(a, res.logits);
    r.logit_max_abs_error = std::max(r.logit_max_abs_error, diff);
    r.logit_max_rel_error = std::max(r.logit_max_rel_error, diff / std::max(max_abs(a), 1e-12));
    for (std::size_t i = 0; i < a.size(); ++i) abs_sum += std::abs(a[i] - res.logits[i]);
    abs_count += a.size();
    agree += argmax(a) == argmax(res.logits) ? 1 : 0;
    r.spikes.merge(res.stats);
  }
  for (const auto& site : order) {
    auto it = errs.find(site);
    if (it == errs.end()) continue;
    SiteError e = it->second;
    e.max_rel_error = e.max_abs_error / std::max(ann_scale[site], 1e-12);
    r.sites.push_back(std::move(e));
  }
  r.logit_mean_abs_error = abs_count ? abs_sum / static_cast<double>(abs_count) : 0.0;
  r.top1_agreement = images.empty() ? 1.0 : static_cast<double>(agree) / static_cast<double>(images.size());
  return r;
}

AnnAgreement compare_ann(const TailoredModel& a, const ForwardOptions& opts_a, const TailoredModel& b,
                         const ForwardOptions& opts_b, std::span<const Tensor> images) {
  if (!(a.config == b.config)) throw MismatchError("compared models have different configurations");
  AnnAgreement r;
  r.images = images.size();
  std::size_t agree = 0;
  for (const auto& image : images) {
    const Tensor ya = forward(a, image, opts_a);
    const Tensor yb = forward(b, image, opts_b);
    const double diff = max_abs_diff(ya, yb);
    r.max_abs_error = std::max(r.max_abs_error, diff);
    r.max_rel_error = std::max(r.max_rel_error, diff / std::max(max_abs(ya), 1e-12));
    agree += argmax(ya) == argmax(yb) ? 1 : 0;
  }
  r.top1_agreement = images.empty() ? 1.0 : static_cast<double>(agree) / static_cast<double>(images.size());
  return r;
}

DelaySweepResult sweep_delay(const TailoredModel& ann, const SpikingModel& snn,
                             std::span<const Tensor> images, std::span<const int> delays) {
  for (std::size_t i = 1; i < delays.size(); ++i) {
    if (delays[i] <= delays[i - 1]) throw ContractViolation("sweep_delay: delays must be strictly increasing");
  }
  DelaySweepResult r;
  r.time_window = snn.time_window;
  r.images = images.size();
  for (int d : delays) {
    const EquivalenceReport e = compare_ann_snn(ann, snn, images, d);
    r.points.push_back({d, e.logit_mean_abs_error, e.logit_max_rel_error, e.top1_agreement});
  }
  r.non_increasing = true;
  for (std::size_t i = 1; i < r.points.size(); ++i) {
    if (r.points[i].mean_logit_error > r.points[i - 1].mean_logit_error + kMonotoneSlack) r.non_increasing = false;
  }
  auto full = std::find_if(r.points.begin(), r.points.end(),
                           [&](const DelayPoint& p) { return p.delay == snn.time_window; });
  if (full != r.points.end()) {
    const double ref = full->mean_logit_error;
    auto within = [&](const DelayPoint& p) { return std::abs(p.mean_logit_error - ref) <= kSaturationTolerance; };
    r.saturated = within(r.points.back());
    for (std::size_t i = r.points.size(); i-- > 0;) {
      if (!within(r.points[i])) break;
      r.saturation_delay = r.points[i].delay;
    }
  }
  return r;
}

SpikeStats spike_stats(const SpikingModel& snn, std::span<const Tensor> images, int delay) {
  SpikeStats total;
  for (const auto& image : images) total.merge(run_snn(snn, image, delay).stats);
  if (images.empty()) {
    total.time_window = snn.time_window;
    total.delay = delay;
    total.latency = latency_for(snn.network.config, snn.time_window, delay);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Serialization

json to_json(const TdecReport& r) {
  return {{"trials", r.trials}, {"seed", r.seed}, {"vmm_checked", r.vmm_checked},
          {"maxpool_checked", r.maxpool_checked}, {"failure", r.failure}, {"seconds", r.seconds},
          {"passed", r.passed()}};
}

TdecReport tdec_report_from_json(const json& j) {
  TdecReport r;
  r.trials = j.at("trials").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.vmm_checked = j.at("vmm_checked").get<std::size_t>();
  r.maxpool_checked = j.at("maxpool_checked").get<std::size_t>();
  r.failure = j.at("failure").get<std::string>();
  r.seconds = j.at("seconds").get<double>();
  return r;
}

json to_json(const DifReport& r) {
  return {{"cases", r.cases}, {"seed", r.seed}, {"exact_cases", r.exact_cases},
          {"mismatches", r.mismatches}, {"first_mismatch", r.first_mismatch}, {"passed", r.passed()}};
}

DifReport dif_report_from_json(const json& j) {
  DifReport r;
  r.cases = j.at("cases").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.exact_cases = j.at("exact_cases").get<std::size_t>();
  r.mismatches = j.at("mismatches").get<std::size_t>();
  r.first_mismatch = j.at("first_mismatch").get<std::string>();
  return r;
}

json to_json(const SpikeStats& s) {
  json layers = json::array();
  for (const auto& l : s.layers) {
    layers.push_back({{"layer", l.layer}, {"kind", std::string(to_string(l.kind))}, {"neurons", l.neurons},
                      {"per_step", l.per_step}, {"total", l.total}, {"samples", l.samples},
                      {"rate", l.rate()}});
  }
  return {{"time_window", s.time_window},
          {"delay", s.delay},
          {"images", s.images},
          {"total_spikes", s.total_spikes()},
          {"layers", layers},
          {"latency",
           {{"per_layer_ticks", s.latency.per_layer_ticks},
            {"depth", s.latency.depth},
            {"accumulated_ticks", s.latency.accumulated_ticks}}}};
}

SpikeStats spike_stats_from_json(const json& j) {
  SpikeStats s;
  s.time_window = j.at("time_window").get<int>();
  s.delay = j.at("delay").get<int>();
  s.images = j.at("images").get<std::size_t>();
  for (const auto& l : j.at("layers")) {
    LayerSpikeStats ls;
    ls.layer = l.at("layer").get<std::string>();
    auto kind = parse_neuron_kind(l.at("kind").get<std::string>());
    if (!kind) throw FormatError("unknown layer kind " + l.at("kind").get<std::string>());
    ls.kind = *kind;
    ls.neurons = l.at("neurons").get<std::size_t>();
    ls.per_step = l.at("per_step").get<std::vector<std::uint64_t>>();
    ls.total = l.at("total").get<std::uint64_t>();
    ls.samples = l.at("samples").get<std::size_t>();
    s.layers.push_back(std::move(ls));
  }
  const auto& lat = j.at("latency");
  s.latency.per_layer_ticks = lat.at("per_layer_ticks").get<int>();
  s.latency.depth = lat.at("depth").get<std::size_t>();
  s.latency.accumulated_ticks = lat.at("accumulated_ticks").get<std::size_t>();
  return s;
}

json to_json(const EquivalenceReport& r) {
  json sites = json::array();
  for (const auto& s : r.sites) {
    sites.push_back({{"site", s.site}, {"max_abs_error", s.max_abs_error}, {"max_rel_error", s.max_rel_error}});
  }
  return {{"delay", r.delay},
          {"time_window", r.time_window},
          {"images", r.images},
          {"sites", sites},
          {"logit_max_abs_error", r.logit_max_abs_error},
          {"logit_mean_abs_error", r.logit_mean_abs_error},
          {"logit_max_rel_error", r.logit_max_rel_error},
          {"top1_agreement", r.top1_agreement},
          {"spikes", to_json(r.spikes)}};
}

EquivalenceReport equivalence_report_from_json(const json& j) {
  EquivalenceReport r;
  r.delay = j.at("delay").get<int>();
  r.time_window = j.at("time_window").get<int>();
  r.images = j.at("images").get<std::size_t>();
  for (const auto& s : j.at("sites")) {
    r.sites.push_back({s.at("site").get<std::string>(), s.at("max_abs_error").get<double>(),
                       s.at("max_rel_error").get<double>()});
  }
  r.logit_max_abs_error = j.at("logit_max_abs_error").get<double>();
  r.logit_mean_abs_error = j.at("logit_mean_abs_error").get<double>();
  r.logit_max_rel_error = j.at("logit_max_rel_error").get<double>();
  r.top1_agreement = j.at("top1_agreement").get<double>();
  r.spikes = spike_stats_from_json(j.at("spikes"));
  return r;
}

json to_json(const AnnAgreement& r) {
  return {{"images", r.images}, {"max_abs_error", r.max_abs_error}, {"max_rel_error", r.max_rel_error},
          {"top1_agreement", r.top1_agreement}};
}

AnnAgreement ann_agreement_from_json(const json& j) {
  return {j.at("images").get<std::size_t>(), j.at("max_abs_error").get<double>(),
          j.at("max_rel_error").get<double>(), j.at("top1_agreement").get<double>()};
}

json to_json(const DelaySweepResult& r) {
  json points = json::array();
  for (const auto& p : r.points) {
    points.push_back({{"delay", p.delay}, {"mean_logit_error", p.mean_logit_error},
                      {"max_rel_error", p.max_rel_error}, {"top1_agreement", p.top1_agreement}});
  }
  return {{"time_window", r.time_window}, {"images", r.images},         {"points", points},
          {"non_increasing", r.non_increasing}, {"saturated", r.saturated}, {"saturation_delay", r.saturation_delay}};
}

DelaySweepResult delay_sweep_from_json(const json& j) {
  DelaySweepResult r;
  r.time_window = j.at("time_window").get<int>();
  r.images = j.at("images").get<std::size_t>();
  for (const auto& p : j.at("points")) {
    r.points.push_back({p.at("delay").get<int>(), p.at("mean_logit_error").get<double>(),
                        p.at("max_rel_error").get<double>(), p.at("top1_agreement").get<double>()});
  }
  r.non_increasing = j.at("non_increasing").get<bool>();
  r.saturated = j.at("saturated").get<bool>();
  r.saturation_delay = j.at("saturation_delay").get<int>();
  return r;
}

}  // namespace spikedrive
