// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "kernels_internal.hpp"

namespace spikedrive::kernels {
namespace {

void gemm_accumulate(const double* a, const double* b, double* c, std::size_t m,
                     std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = a[i * k + kk];
      if (aik == 0.0) continue;
      const double* brow = b + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] = crow[j] + aik * brow[j];
    }
  }
}

void add_inplace(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + x[i];
}

void scale_shift(const double* x, double scale, double shift, double* out,
                 std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * scale + shift;
}

void relu(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] < 0.0 ? 0.0 : x[i];
}

void lsq_levels(const double* x, double step, double levels, double* out,
                std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double u = x[i] / step;
    u = u > 0.0 ? u : 0.0;
    u = u < levels ? u : levels;
    out[i] = std::floor(u + 0.5);
  }
}

std::size_t fire(double* v, double theta, double* spikes, std::size_t n) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (v[i] >= theta) {
      v[i] = v[i] - theta;
      spikes[i] = 1.0;
      ++count;
    } else {
      spikes[i] = 0.0;
    }
  }
  return count;
}

constexpr KernelTable kTable{
    Backend::Scalar, "scalar",   gemm_accumulate, add_inplace,
    scale_shift,     relu,       lsq_levels,      fire,
};

}  // namespace

const KernelTable& scalar_kernels() { return kTable; }

}  // namespace spikedrive::kernels
