// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikedrive/quantization.hpp"

#include <cmath>
#include <string>

#include "spikedrive/errors.hpp"
#include "spikedrive/kernels.hpp"

namespace spikedrive {

BNParams BNParams::identity(std::size_t channels, double eps) {
  BNParams bn;
  bn.gamma.assign(channels, 1.0);
  bn.beta.assign(channels, 0.0);
  bn.mean.assign(channels, 0.0);
  bn.var.assign(channels, 1.0);
  bn.eps = eps;
  return bn;
}

void BNParams::validate() const {
  const auto c = gamma.size();
  if (beta.size() != c || mean.size() != c || var.size() != c) {
    throw ShapeError("batch norm parameter lengths differ");
  }
  for (std::size_t i = 0; i < c; ++i) {
    if (!(var[i] + eps > 0.0)) {
      throw NumericError("batch norm channel " + std::to_string(i) +
                         ": var + eps must be positive");
    }
  }
}

double round_half_up(double x) { return std::floor(x + 0.5); }

double lsq(double x, const QuantParams& q) {
  double u = x / q.step;
  u = u > 0.0 ? u : 0.0;
  const double l = static_cast<double>(q.levels);
  u = u < l ? u : l;
  return q.step * round_half_up(u);
}

Tensor lsq_levels(const Tensor& x, const QuantParams& q) {
  Tensor out(x.shape());
  kernels::active().lsq_levels(x.raw(), q.step, static_cast<double>(q.levels), out.raw(),
                               x.size());
  return out;
}

Tensor lsq(const Tensor& x, const QuantParams& q) {
  Tensor out = lsq_levels(x, q);
  kernels::active().scale_shift(out.raw(), q.step, 0.0, out.raw(), out.size());
  return out;
}

double qcfs(double x, double lambda, int levels, double shift) {
  const double l = static_cast<double>(levels);
  double v = std::floor(x * l / lambda + shift) / l;
  v = v > 0.0 ? v : 0.0;
  v = v < 1.0 ? v : 1.0;
  return lambda * v;
}

Tensor qcfs(const Tensor& x, double lambda, int levels, double shift) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = qcfs(x[i], lambda, levels, shift);
  return out;
}

Tensor batch_norm(const Tensor& x, const BNParams& bn, std::size_t axis) {
  bn.validate();
  const auto c = bn.channels();
  std::vector<double> scale(c), shift(c);
  for (std::size_t i = 0; i < c; ++i) {
    scale[i] = bn.gamma[i] / std::sqrt(bn.var[i] + bn.eps);
    shift[i] = bn.beta[i] - bn.mean[i] * scale[i];
  }
  return affine(x, scale, shift, axis);
}

std::pair<Tensor, Tensor> fold_bn(const Tensor& weight, const Tensor& bias, const BNParams& bn) {
  bn.validate();
  const std::size_t out = weight.dim(0);
  if (bn.channels() != out || bias.rank() != 1 || bias.dim(0) != out) {
    throw ShapeError("fold_bn: " + std::to_string(bn.channels()) + " BN channels for weight " +
                     shape_to_string(weight.shape()) + " and bias " +
                     shape_to_string(bias.shape()));
  }
  const std::size_t per_out = weight.size() / out;
  Tensor w(weight.shape());
  Tensor b(bias.shape());
  for (std::size_t o = 0; o < out; ++o) {
    const double factor = bn.gamma[o] / std::sqrt(bn.var[o] + bn.eps);
    for (std::size_t i = 0; i < per_out; ++i) w[o * per_out + i] = weight[o * per_out + i] * factor;
    b[o] = (bias[o] - bn.mean[o]) * factor + bn.beta[o];
  }
  return {std::move(w), std::move(b)};
}

}  // namespace spikedrive
