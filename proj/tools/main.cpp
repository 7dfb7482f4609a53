// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "spikedrive/cli.hpp"

int main(int argc, char** argv) {
  return spikedrive::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
