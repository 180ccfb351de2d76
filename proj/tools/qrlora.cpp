// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "qrlora/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return qrlora::cli_dispatch(args, std::cout, std::cerr);
}
