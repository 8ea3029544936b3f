// Copyright 2026 The mdlm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mdlm::cli {

/// Runs one command line (argv[0] is the program name). Returns the process
/// exit code; usage and errors go to `err`, results to `out`.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace mdlm::cli
