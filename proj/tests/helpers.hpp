// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "spikedrive/model.hpp"

namespace testing {

/// C=1, 8x8 image, one conv block, D=8, h=2, one block, two classes.
inline spikedrive::ModelConfig tiny_config() {
  spikedrive::ModelConfig c;
  c.channels = 1;
  c.height = 8;
  c.width = 8;
  c.conv_blocks = {{8, true}};
  c.embed_dim = 8;
  c.blocks = 1;
  c.heads = 2;
  c.classes = 2;
  c.quant_levels = 4;
  return c;
}

/// Two pooled conv stages and two blocks; still small enough for fast tests.
inline spikedrive::ModelConfig small_config() {
  spikedrive::ModelConfig c;
  c.channels = 3;
  c.height = 16;
  c.width = 16;
  c.conv_blocks = {{16, true}, {32, true}};
  c.embed_dim = 32;
  c.blocks = 2;
  c.heads = 4;
  c.classes = 10;
  c.quant_levels = 4;
  return c;
}

inline spikedrive::Tensor random_tensor(spikedrive::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                        double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  spikedrive::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("spikedrive-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
