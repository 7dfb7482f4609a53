// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

// Built with -mavx2 only (no -mfma): every lane performs the same mul then
// add as the scalar loop, so results are bit-identical.

#include <immintrin.h>

#include <cmath>

#include "kernels_internal.hpp"

namespace spikedrive::kernels {
namespace {

constexpr std::size_t kLanes = 4;

void gemm_accumulate(const double* a, const double* b, double* c, std::size_t m,
                     std::size_t k, std::size_t p) {
  const std::size_t vec_end = p - p % kLanes;
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = a[i * k + kk];
      if (aik == 0.0) continue;
      const double* brow = b + kk * p;
      const __m256d av = _mm256_set1_pd(aik);
      std::size_t j = 0;
      for (; j < vec_end; j += kLanes) {
        const __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(brow + j));
        _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
      }
      for (; j < p; ++j) crow[j] = crow[j] + aik * brow[j];
    }
  }
}

void add_inplace(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] = y[i] + x[i];
}

void scale_shift(const double* x, double scale, double shift, double* out,
                 std::size_t n) {
  const __m256d sv = _mm256_set1_pd(scale);
  const __m256d hv = _mm256_set1_pd(shift);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(x + i), sv);
    _mm256_storeu_pd(out + i, _mm256_add_pd(prod, hv));
  }
  for (; i < n; ++i) out[i] = x[i] * scale + shift;
}

// _mm256_max_pd(a, b) computes a > b ? a : b, matching the scalar ternaries
// for signed zeros and NaN.
void relu(const double* x, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(out + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) out[i] = x[i] < 0.0 ? 0.0 : x[i];
}

void lsq_levels(const double* x, double step, double levels, double* out,
                std::size_t n) {
  const __m256d sv = _mm256_set1_pd(step);
  const __m256d lv = _mm256_set1_pd(levels);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d half = _mm256_set1_pd(0.5);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    __m256d u = _mm256_div_pd(_mm256_loadu_pd(x + i), sv);
    u = _mm256_max_pd(u, zero);
    u = _mm256_min_pd(u, lv);
    _mm256_storeu_pd(out + i, _mm256_floor_pd(_mm256_add_pd(u, half)));
  }
  for (; i < n; ++i) {
    double u = x[i] / step;
    u = u > 0.0 ? u : 0.0;
    u = u < levels ? u : levels;
    out[i] = std::floor(u + 0.5);
  }
}

std::size_t fire(double* v, double theta, double* spikes, std::size_t n) {
  const __m256d tv = _mm256_set1_pd(theta);
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d vv = _mm256_loadu_pd(v + i);
    const __m256d mask = _mm256_cmp_pd(vv, tv, _CMP_GE_OQ);
    _mm256_storeu_pd(v + i, _mm256_sub_pd(vv, _mm256_and_pd(mask, tv)));
    _mm256_storeu_pd(spikes + i, _mm256_and_pd(mask, one));
    count += static_cast<std::size_t>(__builtin_popcount(
        static_cast<unsigned>(_mm256_movemask_pd(mask))));
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
    Backend::Avx2, "avx2", gemm_accumulate, add_inplace,
    scale_shift,   relu,   lsq_levels,      fire,
};

}  // namespace

namespace detail {
const KernelTable* avx2_table() { return &kTable; }
}  // namespace detail

}  // namespace spikedrive::kernels
