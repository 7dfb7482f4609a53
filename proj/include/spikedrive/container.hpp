// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spikedrive/conversion.hpp"
#include "spikedrive/model.hpp"

namespace spikedrive {

/// On-disk model container: a directory holding `manifest.json` and
/// `tensors.bin`. The blob is raw little-endian float32 data, tensors
/// concatenated in manifest order.
///
/// Manifest keys: format_version (1), kind ("ann" | "spiking"), config,
/// tensors [{name, dtype "f32", shape, offset, length}], quantizers
/// {site: {s, L}}, optional metadata. Spiking containers add time_window,
/// thresholds {site: {kind, theta, theta_prime, absorbed_scale,
/// presynaptic}} and tdec_sites.
///
/// Tensor names: tok{i}.conv.{weight,bias}, tok{i}.bn.{gamma,beta,mean,var},
/// blk{b}.{q,k,v,proj,fc1,fc2}.{weight,bias} with .bn.* alongside,
/// head.{weight,bias}.
namespace container {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "tensors.bin";

enum class Kind { Ann, Spiking };

struct Loaded {
  Kind kind = Kind::Ann;
  TailoredModel model;                  // for spiking containers, the BN-free network
  std::optional<SpikingModel> spiking;  // set for spiking containers
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::string> warnings;    // unknown tensors and manifest keys
};

/// Throws IncompleteModelError if a site lacks valid QuantParams and IoError
/// if the directory cannot be written.
void save(const TailoredModel& model, const std::filesystem::path& dir,
          const nlohmann::json& metadata = nlohmann::json::object());
void save(const SpikingModel& model, const std::filesystem::path& dir,
          const nlohmann::json& metadata = nlohmann::json::object());

/// Errors: IoError (missing files), FormatError (malformed manifest, unknown
/// version or dtype), OffsetOverflowError (tensor outside the blob or
/// overlapping), IncompleteModelError (missing tensor or quantizer site),
/// ShapeMismatchError (tensor shape disagrees with the config).
Loaded load(const std::filesystem::path& dir);

/// Raw tensor directory of any container, validated for format and offsets
/// but not against a model config.
std::map<std::string, Tensor> read_tensors(const std::filesystem::path& dir);

/// Convenience wrappers that reject the other container kind with FormatError.
TailoredModel load_model(const std::filesystem::path& dir, std::vector<std::string>* warnings = nullptr);
SpikingModel load_spiking(const std::filesystem::path& dir, std::vector<std::string>* warnings = nullptr);

}  // namespace container

nlohmann::json config_to_json(const ModelConfig& config);
/// Strict: unknown keys and inconsistent derived fields raise ConfigError.
ModelConfig config_from_json(const nlohmann::json& j);
ModelConfig load_config(const std::filesystem::path& file);

}  // namespace spikedrive
