// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace spikedrive {

using Shape = std::vector<std::size_t>;

std::size_t shape_product(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of 64-bit reals. A default-constructed tensor is a
/// rank-0 scalar holding 0.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t c, std::size_t i, std::size_t j);
  double at(std::size_t c, std::size_t i, std::size_t j) const;

  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct ConvSpec {
  Tensor kernel;  // [out_ch, in_ch, kh, kw]
  Tensor bias;    // [out_ch]
  std::pair<std::size_t, std::size_t> stride{1, 1};
  std::pair<std::size_t, std::size_t> padding{0, 0};

  std::size_t out_channels() const { return kernel.dim(0); }
  std::size_t in_channels() const { return kernel.dim(1); }
  void validate() const;
};

struct PoolSpec {
  std::pair<std::size_t, std::size_t> window{2, 2};
  std::pair<std::size_t, std::size_t> stride{2, 2};
  bool operator==(const PoolSpec&) const = default;
};

// All operations below are pure: inputs are never modified.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor conv2d(const Tensor& x, const ConvSpec& spec);
Tensor maxpool2d(const Tensor& x, const PoolSpec& pool = {});
Tensor global_avg_pool(const Tensor& x);

/// out = scale * x + shift, with scale/shift indexed along `axis`.
Tensor affine(const Tensor& x, std::span<const double> scale,
              std::span<const double> shift, std::size_t axis);

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor relu(const Tensor& x);

/// x * W^T + b for token matrix x [N, in], weight [out, in], bias [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Columns [begin, begin + count) of a rank-2 tensor.
Tensor column_block(const Tensor& x, std::size_t begin, std::size_t count);
/// Concatenate rank-2 tensors with equal row counts along columns.
Tensor concat_columns(std::span<const Tensor> parts);
/// Stack equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);

/// [C, H, W] feature map to [H*W, C] token matrix (tokens row-major over H, W).
Tensor feature_map_to_tokens(const Tensor& x);

double sum(const Tensor& x);
double max_abs(const Tensor& x);
double max_abs_diff(const Tensor& a, const Tensor& b);
std::size_t argmax(const Tensor& x);
bool all_finite(const Tensor& x);

}  // namespace spikedrive
