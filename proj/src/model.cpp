// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikedrive/model.hpp"

#include <cmath>
#include <random>

#include "spikedrive/errors.hpp"

namespace spikedrive {

// ---------------------------------------------------------------------------
// Configuration

std::size_t ModelConfig::maxpool_count() const {
  std::size_t n = 0;
  for (const auto& b : conv_blocks) n += b.maxpool ? 1 : 0;
  return n;
}

std::size_t ModelConfig::grid_height() const { return height >> maxpool_count(); }
std::size_t ModelConfig::grid_width() const { return width >> maxpool_count(); }

void ModelConfig::validate() const {
  if (channels < 1 || height < 1 || width < 1) throw ConfigError("image extents must be >= 1");
  if (conv_blocks.empty()) throw ConfigError("tokenizer needs at least one conv block");
  for (std::size_t i = 0; i < conv_blocks.size(); ++i) {
    if (conv_blocks[i].out_channels < 1) {
      throw ConfigError("conv block " + std::to_string(i) + " has no output channels");
    }
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd");
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (conv_blocks.back().out_channels != embed_dim) {
    throw ConfigError("last conv block must output embed_dim (" + std::to_string(embed_dim) +
                      ") channels, got " + std::to_string(conv_blocks.back().out_channels));
  }
  if (heads < 1 || embed_dim % heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (blocks < 1) throw ConfigError("need at least one transformer block");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
  if (classes < 1) throw ConfigError("classes must be >= 1");
  if (quant_levels < 1) throw ConfigError("quant_levels must be >= 1");
  if (!(bn_eps > 0.0)) throw ConfigError("bn_eps must be positive");
  const std::size_t factor = std::size_t{1} << maxpool_count();
  if (height % factor != 0 || width % factor != 0) {
    throw ConfigError("image " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible by the tokenizer downsampling factor " +
                      std::to_string(factor));
  }
}

std::size_t TailoredModel::batch_norm_count() const {
  std::size_t n = 0;
  for (const auto& s : tokenizer) n += s.bn ? 1 : 0;
  for (const auto& b : blocks) {
    for (const Dense* d : {&b.query, &b.key, &b.value, &b.proj, &b.fc1, &b.fc2}) n += d->bn ? 1 : 0;
  }
  return n + (head.bn ? 1 : 0);
}

namespace sites {
namespace {
std::string blk(std::size_t b, const char* leaf) { return "blk" + std::to_string(b) + "." + leaf; }
}  // namespace
std::string tokenizer(std::size_t stage) { return "tok" + std::to_string(stage) + ".act"; }
std::string block_input(std::size_t b) { return blk(b, "in"); }
std::string query(std::size_t b) { return blk(b, "q"); }
std::string key(std::size_t b) { return blk(b, "k"); }
std::string value(std::size_t b) { return blk(b, "v"); }
std::string score(std::size_t b) { return blk(b, "score"); }
std::string attention(std::size_t b) { return blk(b, "attn"); }
std::string mlp_input(std::size_t b) { return blk(b, "mlp_in"); }
std::string mlp_hidden(std::size_t b) { return blk(b, "mlp_hidden"); }
std::string head() { return "head.in"; }
}  // namespace sites

std::vector<std::string> activation_sites(const ModelConfig& config) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < config.conv_blocks.size(); ++i) out.push_back(sites::tokenizer(i));
  for (std::size_t b = 0; b < config.blocks; ++b) {
    for (auto s : {sites::block_input(b), sites::query(b), sites::key(b), sites::value(b),
                   sites::score(b), sites::attention(b), sites::mlp_input(b), sites::mlp_hidden(b)}) {
      out.push_back(std::move(s));
    }
  }
  out.push_back(sites::head());
  return out;
}

// ---------------------------------------------------------------------------
// Construction

namespace {

class TruncatedNormal {
 public:
  TruncatedNormal(std::mt19937_64& rng, double stddev) : rng_(rng), dist_(0.0, stddev), limit_(2 * stddev) {}
  double operator()() {
    for (;;) {
      const double v = dist_(rng_);
      if (std::abs(v) <= limit_) return v;
    }
  }

 private:
  std::mt19937_64& rng_;
  std::normal_distribution<double> dist_;
  double limit_;
};

Tensor random_tensor(Shape shape, TruncatedNormal& init) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = init();
  return t;
}

Dense make_dense(std::size_t out, std::size_t in, TruncatedNormal& init, double eps, bool with_bn) {
  Dense d;
  d.weight = random_tensor({out, in}, init);
  d.bias = Tensor(Shape{out});
  if (with_bn) d.bn = BNParams::identity(out, eps);
  return d;
}

}  // namespace

TailoredModel build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  TruncatedNormal init(rng, 0.02);

  TailoredModel model;
  model.config = config;

  std::size_t in_ch = config.channels;
  const std::size_t k = config.kernel_size;
  for (const auto& blockcfg : config.conv_blocks) {
    ConvStage stage;
    stage.conv.kernel = random_tensor({blockcfg.out_channels, in_ch, k, k}, init);
    stage.conv.bias = Tensor(Shape{blockcfg.out_channels});
    stage.conv.stride = {1, 1};
    stage.conv.padding = {k / 2, k / 2};
    stage.bn = BNParams::identity(blockcfg.out_channels, config.bn_eps);
    stage.maxpool = blockcfg.maxpool;
    model.tokenizer.push_back(std::move(stage));
    in_ch = blockcfg.out_channels;
  }

  const std::size_t d = config.embed_dim;
  const std::size_t hidden = d * config.mlp_ratio;
  for (std::size_t b = 0; b < config.blocks; ++b) {
    TransformerBlock blk;
    blk.query = make_dense(d, d, init, config.bn_eps, true);
    blk.key = make_dense(d, d, init, config.bn_eps, true);
    blk.value = make_dense(d, d, init, config.bn_eps, true);
    blk.proj = make_dense(d, d, init, config.bn_eps, true);
    blk.fc1 = make_dense(hidden, d, init, config.bn_eps, true);
    blk.fc2 = make_dense(d, hidden, init, config.bn_eps, true);
    model.blocks.push_back(std::move(blk));
  }
  model.head = make_dense(config.classes, d, init, config.bn_eps, false);

  const auto calibration = random_images(config, 4, seed ^ 0x9e3779b97f4a7c15ULL);
  calibrate_quantizers(model, calibration, CalibrationRule::MeanAbs);
  return model;
}

std::vector<Tensor> random_images(const ModelConfig& config, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor img(Shape{config.channels, config.height, config.width});
    for (auto& v : img.data()) v = u(rng);
    out.push_back(std::move(img));
  }
  return out;
}

void fit_batch_norms(TailoredModel& model, std::span<const Tensor> images) {
  if (images.empty()) throw ConfigError("BN fitting needs at least one image");
  std::vector<std::pair<std::string, BNParams*>> layers;
  for (std::size_t i = 0; i < model.tokenizer.size(); ++i) {
    if (model.tokenizer[i].bn) layers.emplace_back("tok" + std::to_string(i) + ".conv", &*model.tokenizer[i].bn);
  }
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    auto& blk = model.blocks[b];
    const std::string prefix = "blk" + std::to_string(b) + ".";
    const std::pair<const char*, Dense*> named[] = {{"q", &blk.query}, {"k", &blk.key}, {"v", &blk.value},
                                                    {"proj", &blk.proj}, {"fc1", &blk.fc1}, {"fc2", &blk.fc2}};
    for (auto [leaf, d] : named) {
      if (d->bn) layers.emplace_back(prefix + leaf, &*d->bn);
    }
  }

  for (auto& [name, bn] : layers) {
    const std::size_t channels = bn->channels();
    std::vector<double> s1(channels, 0.0), s2(channels, 0.0);
    std::size_t per_channel = 0;
    ForwardOptions opts;
    opts.norm_observer = [&](std::string_view layer, const Tensor& x) {
      if (layer != name) return;
      const bool conv = x.rank() == 3;
      const std::size_t n = x.size() / channels;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t c = conv ? i / n : i % channels;
        s1[c] += x[i];
        s2[c] += x[i] * x[i];
      }
      per_channel += n;
    };
    for (const auto& img : images) forward(model, img, opts);
    for (std::size_t c = 0; c < channels; ++c) {
      const double mean = s1[c] / static_cast<double>(per_channel);
      bn->mean[c] = mean;
      bn->var[c] = std::max(s2[c] / static_cast<double>(per_channel) - mean * mean, 0.0);
    }
  }
}

TailoredModel build_fitted_model(const ModelConfig& config, std::uint64_t seed) {
  TailoredModel model = build_model(config, seed);
  randomize_affine_parameters(model, seed + 1);
  const auto images = random_images(config, 8, seed ^ 0x5851f42d4c957f2dULL);
  fit_batch_norms(model, images);
  calibrate_quantizers(model, images, CalibrationRule::MeanAbs);
  return model;
}

void randomize_affine_parameters(TailoredModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> gamma(0.5, 1.5), beta(-0.05, 0.05), mean(-0.02, 0.02),
      var(0.5, 2.0), bias(-0.02, 0.02);
  auto fill_bn = [&](std::optional<BNParams>& bn) {
    if (!bn) return;
    for (auto& v : bn->gamma) v = gamma(rng);
    for (auto& v : bn->beta) v = beta(rng);
    for (auto& v : bn->mean) v = mean(rng);
    for (auto& v : bn->var) v = var(rng);
  };
  auto fill_bias = [&](Tensor& t) {
    for (auto& v : t.data()) v = bias(rng);
  };
  for (auto& s : model.tokenizer) {
    fill_bias(s.conv.bias);
    fill_bn(s.bn);
  }
  for (auto& b : model.blocks) {
    for (Dense* d : {&b.query, &b.key, &b.value, &b.proj, &b.fc1, &b.fc2}) {
      fill_bias(d->bias);
      fill_bn(d->bn);
    }
  }
  fill_bias(model.head.bias);
}

// ---------------------------------------------------------------------------
// Evaluation

Tensor nrelu(const Tensor& x, std::size_t n) {
  if (n < 1) throw ConfigError("nrelu: token count must be >= 1");
  Tensor out = relu(x);
  const double d = static_cast<double>(n);
  for (double& v : out.data()) v /= d;
  return out;
}

namespace {

void require_finite(const Tensor& t, std::string_view where) {
  if (!all_finite(t)) throw NumericError("non-finite value at " + std::string(where));
}

const QuantParams* site_quantizer(const TailoredModel& model, const std::string& site,
                                  const ForwardOptions& opts) {
  auto it = model.quantizers.find(site);
  if (it != model.quantizers.end() && it->second.valid()) return &it->second;
  if (opts.allow_uncalibrated) return nullptr;
  throw ConfigError("quantizer site " + site + " has no valid step size");
}

Tensor activate(const TailoredModel& model, const std::string& site, const Tensor& input,
                const ForwardOptions& opts) {
  Tensor out;
  if (opts.mode == ActivationMode::Float) {
    out = relu(input);
  } else if (const QuantParams* q = site_quantizer(model, site, opts)) {
    out = lsq(input, *q);
  } else {
    out = relu(input);
  }
  if (opts.observer) opts.observer(site, input, out);
  return out;
}

Tensor apply_dense(const Dense& layer, const Tensor& x, const std::string& where,
                   const ForwardOptions& opts) {
  Tensor y = linear(x, layer.weight, layer.bias);
  if (layer.bn) {
    if (opts.norm_observer) opts.norm_observer(where, y);
    y = batch_norm(y, *layer.bn, 1);
  }
  require_finite(y, where);
  return y;
}

}  // namespace

Tensor tokenize(const TailoredModel& model, const Tensor& image, const ForwardOptions& opts) {
  const auto& cfg = model.config;
  if (image.shape() != Shape{cfg.channels, cfg.height, cfg.width}) {
    throw ShapeError("image " + shape_to_string(image.shape()) + " does not match config " +
                     shape_to_string({cfg.channels, cfg.height, cfg.width}));
  }
  Tensor x = image;
  for (std::size_t i = 0; i < model.tokenizer.size(); ++i) {
    const auto& stage = model.tokenizer[i];
    Tensor z = conv2d(x, stage.conv);
    if (stage.bn) {
      if (opts.norm_observer) opts.norm_observer("tok" + std::to_string(i) + ".conv", z);
      z = batch_norm(z, *stage.bn, 0);
    }
    const std::string site = sites::tokenizer(i);
    require_finite(z, site);
    x = activate(model, site, z, opts);
    if (stage.maxpool) x = maxpool2d(x);
  }
  return feature_map_to_tokens(x);
}

Tensor tsa_forward(const TailoredModel& model, std::size_t block, const Tensor& x,
                   const ForwardOptions& opts) {
  const auto& blk = model.blocks.at(block);
  const auto& cfg = model.config;
  const std::size_t n = x.dim(0);
  const std::size_t dk = cfg.head_dim();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  const double delta = 1.0 / (static_cast<double>(n) * std::sqrt(static_cast<double>(dk)));

  const Tensor a = activate(model, sites::block_input(block), x, opts);
  const std::string prefix = "blk" + std::to_string(block) + ".";
  const Tensor q = activate(model, sites::query(block), apply_dense(blk.query, a, prefix + "q", opts), opts);
  const Tensor k = activate(model, sites::key(block), apply_dense(blk.key, a, prefix + "k", opts), opts);
  const Tensor v = activate(model, sites::value(block), apply_dense(blk.value, a, prefix + "v", opts), opts);

  const std::string score_site = sites::score(block);
  const QuantParams* score_q = opts.mode == ActivationMode::Quant
                                   ? site_quantizer(model, score_site, opts)
                                   : nullptr;
  std::vector<Tensor> score_in, score_out, heads_out;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const Tensor qh = column_block(q, h * dk, dk);
    const Tensor kh = column_block(k, h * dk, dk);
    const Tensor vh = column_block(v, h * dk, dk);
    const Tensor raw = matmul(qh, transpose(kh));
    require_finite(raw, score_site);
    Tensor pre, scores;
    if (opts.mode == ActivationMode::Float) {
      pre = scale(raw, inv_sqrt_dk);
      scores = nrelu(pre, n);
    } else if (score_q == nullptr) {
      pre = scale(raw, delta);
      scores = relu(pre);
    } else if (opts.score_scaling == ScoreScaling::Explicit) {
      pre = scale(raw, delta);
      scores = lsq(pre, *score_q);
    } else {
      // LSQ(delta * x; s) == delta * LSQ(x; s / delta)
      pre = scale(raw, delta);
      scores = scale(lsq(raw, QuantParams{score_q->step / delta, score_q->levels}), delta);
    }
    heads_out.push_back(matmul(scores, vh));
    if (opts.observer) {
      score_in.push_back(std::move(pre));
      score_out.push_back(std::move(scores));
    }
  }
  if (opts.observer) opts.observer(score_site, stack(score_in), stack(score_out));

  const Tensor o = activate(model, sites::attention(block), concat_columns(heads_out), opts);
  return apply_dense(blk.proj, o, prefix + "proj", opts);
}

Tensor tmlp_forward(const TailoredModel& model, std::size_t block, const Tensor& x,
                    const ForwardOptions& opts) {
  const auto& blk = model.blocks.at(block);
  const Tensor m = activate(model, sites::mlp_input(block), x, opts);
  const std::string prefix = "blk" + std::to_string(block) + ".";
  const Tensor h = activate(model, sites::mlp_hidden(block), apply_dense(blk.fc1, m, prefix + "fc1", opts), opts);
  return apply_dense(blk.fc2, h, prefix + "fc2", opts);
}

Tensor forward(const TailoredModel& model, const Tensor& image, const ForwardOptions& opts) {
  Tensor x = tokenize(model, image, opts);
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    x = add(x, tsa_forward(model, b, x, opts));
    x = add(x, tmlp_forward(model, b, x, opts));
  }
  const Tensor a = activate(model, sites::head(), x, opts);
  const Tensor pooled = global_avg_pool(a).reshaped({1, model.config.embed_dim});
  Tensor logits = apply_dense(model.head, pooled, "head", opts);
  return logits.reshaped({model.config.classes});
}

Tensor forward(const TailoredModel& model, const Tensor& image, ActivationMode mode) {
  ForwardOptions opts;
  opts.mode = mode;
  return forward(model, image, opts);
}

void calibrate_quantizers(TailoredModel& model, std::span<const Tensor> images,
                          CalibrationRule rule) {
  if (images.empty()) throw ConfigError("calibration needs at least one image");
  const int levels = model.config.quant_levels;
  model.quantizers.clear();
  for (const auto& site : activation_sites(model.config)) {
    double abs_sum = 0.0, abs_max = 0.0;
    std::size_t count = 0;
    ForwardOptions opts;
    opts.mode = ActivationMode::Quant;
    opts.allow_uncalibrated = true;
    opts.observer = [&](std::string_view name, const Tensor& input, const Tensor&) {
      if (name != site) return;
      for (double v : input.data()) {
        abs_sum += std::abs(v);
        abs_max = std::max(abs_max, std::abs(v));
      }
      count += input.size();
    };
    for (const auto& img : images) forward(model, img, opts);

    const double mean_abs = count ? abs_sum / static_cast<double>(count) : 0.0;
    double step = rule == CalibrationRule::MeanAbs
                      ? 2.0 * mean_abs / std::sqrt(static_cast<double>(levels))
                      : abs_max / static_cast<double>(levels);
    // A site that only ever sees zeros quantizes to zero for any step.
    if (!(step > 0.0) || !std::isfinite(step)) step = 1.0 / static_cast<double>(levels);
    model.quantizers[site] = QuantParams{step, levels};
  }
}

}  // namespace spikedrive
