// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>
#include <vector>

#include "spikedrive/tensor.hpp"

namespace spikedrive {

/// Activation quantizer: outputs lie on {0, s, 2s, ..., L*s}.
struct QuantParams {
  double step = 0.0;  // s
  int levels = 0;     // L

  /// Clipping threshold s * L.
  double clip() const { return step * static_cast<double>(levels); }
  bool valid() const { return step > 0.0 && levels >= 1; }
  bool operator==(const QuantParams&) const = default;
};

struct BNParams {
  std::vector<double> gamma, beta, mean, var;
  double eps = 1e-5;

  static BNParams identity(std::size_t channels, double eps = 1e-5);
  std::size_t channels() const { return gamma.size(); }
  void validate() const;
  bool operator==(const BNParams&) const = default;
};

/// Half-up rounding, round(x) := floor(x + 1/2). Used everywhere.
double round_half_up(double x);

/// s * round(clip(x / s, 0, L))
Tensor lsq(const Tensor& x, const QuantParams& q);
double lsq(double x, const QuantParams& q);

/// round(clip(x / s, 0, L)), the integer level index (stored as double).
Tensor lsq_levels(const Tensor& x, const QuantParams& q);

/// lambda * clip(floor(x * L / lambda + shift) / L, 0, 1). Reference form;
/// shift = 0.5 is the clip-floor-shift activation, equal to lsq with s = lambda / L.
Tensor qcfs(const Tensor& x, double lambda, int levels, double shift);
double qcfs(double x, double lambda, int levels, double shift);

/// Batch norm in inference form along `axis`.
Tensor batch_norm(const Tensor& x, const BNParams& bn, std::size_t axis);

/// Fold a BN that follows a linear/conv layer into it. `weight` has the
/// output channel as its leading axis ([out, in] or [out, in, kh, kw]).
std::pair<Tensor, Tensor> fold_bn(const Tensor& weight, const Tensor& bias, const BNParams& bn);

}  // namespace spikedrive
