// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gtr {

// Error classes map 1:1 onto CLI exit codes (see cli.hpp).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/size mismatches in the math kernels. Reported as numeric failures
// at the CLI boundary.
struct DimensionError : NumericError {
  explicit DimensionError(const std::string& msg) : NumericError(msg) {}
};

}  // namespace gtr
