// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace iforge {

/// Raised when a caller violates an operation's precondition (shape mismatch,
/// empty input, out-of-range configuration).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File-system or format failure. The message always carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient during optimization.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define IFORGE_REQUIRE(cond, msg)                                   \
  do {                                                              \
    if (!(cond)) throw ::iforge::ContractError(std::string(msg));   \
  } while (0)

}  // namespace iforge
