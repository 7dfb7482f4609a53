// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "spikedrive/kernels.hpp"

namespace spikedrive::kernels::detail {

// Compiled-in tables, independent of what the running CPU supports.
const KernelTable* avx2_table();
const KernelTable* neon_table();

}  // namespace spikedrive::kernels::detail
