// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mtlasd {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kNonFinite,
  kNotFound,
  kIo,
  kFormat,
};

const char* error_code_name(ErrorCode code);

/// Library-wide exception. `what()` is a single line: "<code>: <message>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

/// Thrown when a forward pass produces NaN/Inf; carries the block that did it.
/// Block index -1 means the input stem, n_blocks means the pooling layer.
class NonFiniteActivation : public Error {
 public:
  NonFiniteActivation(int block, const std::string& where);
  int block() const noexcept { return block_; }

 private:
  int block_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool cond, ErrorCode code, const std::string& message) {
  if (!cond) fail(code, message);
}

}  // namespace mtlasd
