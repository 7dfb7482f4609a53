// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <vector>

#include "spikedrive/tensor.hpp"

namespace spikedrive {

/// Image file: an ASCII header line "C H W\n" followed by C*H*W little-endian
/// float32 values in planar CHW order.
Tensor read_image(const std::filesystem::path& file);
void write_image(const Tensor& image, const std::filesystem::path& file);

/// `*.chw` files in `dir`, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace spikedrive
