// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_internal.hpp"

namespace spikedrive::kernels {

namespace detail {
#ifndef SPIKEDRIVE_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif
#ifndef SPIKEDRIVE_HAVE_NEON
const KernelTable* neon_table() { return nullptr; }
#endif
}  // namespace detail

const KernelTable* avx2_kernels() {
#if defined(SPIKEDRIVE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? detail::avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

// Advanced SIMD is mandatory on AArch64.
const KernelTable* neon_kernels() { return detail::neon_table(); }

std::vector<const KernelTable*> available_backends() {
  std::vector<const KernelTable*> out{&scalar_kernels()};
  if (const auto* t = avx2_kernels()) out.push_back(t);
  if (const auto* t = neon_kernels()) out.push_back(t);
  return out;
}

std::optional<Backend> parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::Scalar;
  if (name == "avx2") return Backend::Avx2;
  if (name == "neon") return Backend::Neon;
  return std::nullopt;
}

namespace {

const KernelTable* table_for(Backend backend) {
  switch (backend) {
    case Backend::Scalar:
      return &scalar_kernels();
    case Backend::Avx2:
      return avx2_kernels();
    case Backend::Neon:
      return neon_kernels();
  }
  return nullptr;
}

const KernelTable* initial_choice() {
  if (const char* env = std::getenv("SPIKEDRIVE_KERNELS")) {
    if (auto b = parse_backend(env)) {
      if (const auto* t = table_for(*b)) return t;
    }
  }
  return available_backends().back();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{initial_choice()};
  return slot;
}

}  // namespace

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

bool select_backend(Backend backend) {
  const auto* t = table_for(backend);
  if (t == nullptr) return false;
  active_slot().store(t, std::memory_order_release);
  return true;
}

}  // namespace spikedrive::kernels
