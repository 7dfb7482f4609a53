// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

// AArch64 Advanced SIMD variant. vmaxq/vminq differ from the scalar
// ternaries on NaN and signed zero, so clamping is done with compare+select.

#include <arm_neon.h>

#include <cmath>

#include "kernels_internal.hpp"

namespace spikedrive::kernels {
namespace {

constexpr std::size_t kLanes = 2;

void gemm_accumulate(const double* a, const double* b, double* c, std::size_t m,
                     std::size_t k, std::size_t p) {
  const std::size_t vec_end = p - p % kLanes;
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = a[i * k + kk];
      if (aik == 0.0) continue;
      const double* brow = b + kk * p;
      const float64x2_t av = vdupq_n_f64(aik);
      std::size_t j = 0;
      for (; j < vec_end; j += kLanes) {
        const float64x2_t prod = vmulq_f64(av, vld1q_f64(brow + j));
        vst1q_f64(crow + j, vaddq_f64(vld1q_f64(crow + j), prod));
      }
      for (; j < p; ++j) crow[j] = crow[j] + aik * brow[j];
    }
  }
}

void add_inplace(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] = y[i] + x[i];
}

void scale_shift(const double* x, double scale, double shift, double* out,
                 std::size_t n) {
  const float64x2_t sv = vdupq_n_f64(scale);
  const float64x2_t hv = vdupq_n_f64(shift);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    vst1q_f64(out + i, vaddq_f64(vmulq_f64(vld1q_f64(x + i), sv), hv));
  }
  for (; i < n; ++i) out[i] = x[i] * scale + shift;
}

void relu(const double* x, double* out, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const float64x2_t xv = vld1q_f64(x + i);
    vst1q_f64(out + i, vbslq_f64(vcltq_f64(xv, zero), zero, xv));
  }
  for (; i < n; ++i) out[i] = x[i] < 0.0 ? 0.0 : x[i];
}

void lsq_levels(const double* x, double step, double levels, double* out,
                std::size_t n) {
  const float64x2_t sv = vdupq_n_f64(step);
  const float64x2_t lv = vdupq_n_f64(levels);
  const float64x2_t zero = vdupq_n_f64(0.0);
  const float64x2_t half = vdupq_n_f64(0.5);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    float64x2_t u = vdivq_f64(vld1q_f64(x + i), sv);
    u = vbslq_f64(vcgtq_f64(u, zero), u, zero);
    u = vbslq_f64(vcltq_f64(u, lv), u, lv);
    vst1q_f64(out + i, vrndmq_f64(vaddq_f64(u, half)));
  }
  for (; i < n; ++i) {
    double u = x[i] / step;
    u = u > 0.0 ? u : 0.0;
    u = u < levels ? u : levels;
    out[i] = std::floor(u + 0.5);
  }
}

std::size_t fire(double* v, double theta, double* spikes, std::size_t n) {
  const float64x2_t tv = vdupq_n_f64(theta);
  const float64x2_t zero = vdupq_n_f64(0.0);
  const float64x2_t one = vdupq_n_f64(1.0);
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const float64x2_t vv = vld1q_f64(v + i);
    const uint64x2_t mask = vcgeq_f64(vv, tv);
    vst1q_f64(v + i, vsubq_f64(vv, vbslq_f64(mask, tv, zero)));
    vst1q_f64(spikes + i, vbslq_f64(mask, one, zero));
    count += static_cast<std::size_t>((vgetq_lane_u64(mask, 0) & 1u) +
                                      (vgetq_lane_u64(mask, 1) & 1u));
  }
  for (; i < n; ++i) {
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
    Backend::Neon, "neon", gemm_accumulate, add_inplace,
    scale_shift,   relu,   lsq_levels,      fire,
};

}  // namespace

namespace detail {
const KernelTable* neon_table() { return &kTable; }
}  // namespace detail

}  // namespace spikedrive::kernels
