// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace qrlora {

/// Runs one command line (argv[0] is the program name). Results go to
/// `out`; failures are reported on `err` as a single JSON object
/// {"error": {"code", "message", "exit_code"}}.
///
/// Exit codes: 0 success, 1 usage, 2 validation or mismatch, 3 I/O,
/// 4 numerical failure.
int cli_dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

/// "start:end:step", end inclusive within 1e-9. Throws Usage.
std::vector<double> parse_lambda_grid(const std::string& spec);

/// "MxN". Throws Usage.
std::pair<std::size_t, std::size_t> parse_shape(const std::string& spec);

}  // namespace qrlora
