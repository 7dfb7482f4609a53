// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

// Inner loops of the engine. Each backend implements the same table; SIMD
// backends are required to be bit-identical to the scalar reference, which
// is why none of them use fused multiply-add and every reduction runs in the
// scalar loop order.

namespace spikedrive::kernels {

enum class Backend { Scalar, Avx2, Neon };

struct KernelTable {
  Backend backend;
  const char* name;

  // c[m x p] += a[m x k] * b[k x p], row-major, accumulated in k order.
  // Zero entries of `a` are skipped (spike trains are sparse).
  void (*gemm_accumulate)(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t p);
  // y[i] += x[i]
  void (*add_inplace)(const double* x, double* y, std::size_t n);
  // out[i] = x[i] * scale + shift
  void (*scale_shift)(const double* x, double scale, double shift, double* out,
                      std::size_t n);
  // out[i] = x[i] < 0 ? 0 : x[i]
  void (*relu)(const double* x, double* out, std::size_t n);
  // out[i] = floor(min(max(x[i] / step, 0), levels) + 0.5), the LSQ level index
  void (*lsq_levels)(const double* x, double step, double levels, double* out,
                     std::size_t n);
  // Fire-and-soft-reset: spikes[i] = v[i] >= theta; v[i] -= theta * spikes[i].
  // Returns the number of spikes emitted.
  std::size_t (*fire)(double* v, double theta, double* spikes, std::size_t n);
};

const KernelTable& scalar_kernels();
/// nullptr when the backend is not compiled in or the CPU lacks it.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

/// Backends usable on this machine, scalar first.
std::vector<const KernelTable*> available_backends();

/// The table the engine routes through. Chosen once at first use: the widest
/// available backend, unless SPIKEDRIVE_KERNELS=scalar|avx2|neon says otherwise.
const KernelTable& active();

/// Override the runtime choice; returns false if `backend` is unavailable.
bool select_backend(Backend backend);

std::optional<Backend> parse_backend(std::string_view name);

}  // namespace spikedrive::kernels
