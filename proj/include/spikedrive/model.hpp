// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spikedrive/quantization.hpp"
#include "spikedrive/tensor.hpp"

namespace spikedrive {

struct ConvBlockConfig {
  std::size_t out_channels = 0;
  bool maxpool = false;
  bool operator==(const ConvBlockConfig&) const = default;
};

/// Architecture hyperparameters. `blocks` is the transformer depth and
/// `quant_levels` the activation quantization level; they are distinct.
struct ModelConfig {
  std::size_t channels = 1, height = 8, width = 8;
  std::vector<ConvBlockConfig> conv_blocks;
  std::size_t kernel_size = 3;  // odd; padding keeps spatial size
  std::size_t embed_dim = 8;
  std::size_t blocks = 1;
  std::size_t heads = 1;
  std::size_t mlp_ratio = 4;
  std::size_t classes = 10;
  int quant_levels = 4;
  double bn_eps = 1e-5;

  /// Throws ConfigError describing the first inconsistency.
  void validate() const;

  std::size_t head_dim() const { return embed_dim / heads; }
  std::size_t maxpool_count() const;
  std::size_t grid_height() const;
  std::size_t grid_width() const;
  std::size_t tokens() const { return grid_height() * grid_width(); }

  bool operator==(const ModelConfig&) const = default;
};

/// A fully connected layer on token matrices; weight is [out, in].
struct Dense {
  Tensor weight;
  Tensor bias;
  std::optional<BNParams> bn;  // follows the layer; absent once folded
};

struct ConvStage {
  ConvSpec conv;
  std::optional<BNParams> bn;
  bool maxpool = false;
};

struct TransformerBlock {
  Dense query, key, value, proj;
  Dense fc1, fc2;
};

using QuantTable = std::map<std::string, QuantParams>;

/// Conversion-oriented transformer. Every linear map is preceded by one
/// activation site (the first convolution sees the image directly) and
/// followed by one BN; the classification head has no BN.
struct TailoredModel {
  ModelConfig config;
  std::vector<ConvStage> tokenizer;
  std::vector<TransformerBlock> blocks;
  Dense head;
  QuantTable quantizers;

  std::size_t batch_norm_count() const;
};

// Activation site names, in evaluation order.
namespace sites {
std::string tokenizer(std::size_t stage);  // after conv stage's BN, before its max-pool
std::string block_input(std::size_t block);
std::string query(std::size_t block);
std::string key(std::size_t block);
std::string value(std::size_t block);
std::string score(std::size_t block);
std::string attention(std::size_t block);  // concatenated heads, before the projection
std::string mlp_input(std::size_t block);
std::string mlp_hidden(std::size_t block);
std::string head();
}  // namespace sites

std::vector<std::string> activation_sites(const ModelConfig& config);

enum class ActivationMode { Float, Quant };

/// How the attention-score constant 1/(N sqrt(d_k)) is applied in quant mode.
/// Absorbed folds it into the score quantizer's step (scale-free levels),
/// which is what threshold absorption does in the spiking model.
enum class ScoreScaling { Explicit, Absorbed };

/// Called with each activation site's input and output. Score sites report
/// [heads, N, N] stacks.
using SiteObserver = std::function<void(std::string_view site, const Tensor& input,
                                        const Tensor& output)>;

/// Sees each BN-bearing layer's output before normalization. Layers are named
/// tok{i}.conv and blk{b}.{q,k,v,proj,fc1,fc2}.
using NormObserver = std::function<void(std::string_view layer, const Tensor& pre_norm)>;

struct ForwardOptions {
  ActivationMode mode = ActivationMode::Float;
  ScoreScaling score_scaling = ScoreScaling::Explicit;
  SiteObserver observer;
  NormObserver norm_observer;
  /// Quant mode only: sites without a valid quantizer act as ReLU. Used
  /// while calibrating step sizes.
  bool allow_uncalibrated = false;
};

TailoredModel build_model(const ModelConfig& config, std::uint64_t seed);

/// max(0, x / n)
Tensor nrelu(const Tensor& x, std::size_t n);

/// Image [C, H, W] to token matrix [N, D].
Tensor tokenize(const TailoredModel& model, const Tensor& image, const ForwardOptions& opts);
Tensor tsa_forward(const TailoredModel& model, std::size_t block, const Tensor& x,
                   const ForwardOptions& opts);
Tensor tmlp_forward(const TailoredModel& model, std::size_t block, const Tensor& x,
                    const ForwardOptions& opts);

Tensor forward(const TailoredModel& model, const Tensor& image, ActivationMode mode);
Tensor forward(const TailoredModel& model, const Tensor& image, const ForwardOptions& opts);

enum class CalibrationRule {
  MeanAbs,  // s = 2 E|x| / sqrt(L)
  Range,    // s = max|x| / L
};

/// Set every site's step from `images`, site by site in evaluation order with
/// earlier sites already quantized. Levels come from config.quant_levels.
void calibrate_quantizers(TailoredModel& model, std::span<const Tensor> images,
                          CalibrationRule rule = CalibrationRule::MeanAbs);

/// Set every BN's running mean and variance to per-channel statistics of its
/// input over `images`, layer by layer in evaluation order (float mode). This
/// is what the running averages of a trained network converge to.
void fit_batch_norms(TailoredModel& model, std::span<const Tensor> images);

/// build_model initialization followed by randomized affine parameters, data-fitted
/// BN statistics and recalibrated quantizers: a random model whose blocks all
/// operate at unit scale.
TailoredModel build_fitted_model(const ModelConfig& config, std::uint64_t seed);

/// Deterministic uniform [0, 1) images matching the config's input extents.
std::vector<Tensor> random_images(const ModelConfig& config, std::size_t count,
                                  std::uint64_t seed);

/// Replace identity BNs and zero biases with random values so that folding
/// and conversion tests have something to fold. Does not recalibrate.
void randomize_affine_parameters(TailoredModel& model, std::uint64_t seed);

}  // namespace spikedrive
