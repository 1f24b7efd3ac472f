// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mtlasd/error.hpp"

namespace mtlasd {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFormat: return "format";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
      code_(code),
      message_(message) {}

NonFiniteActivation::NonFiniteActivation(int block, const std::string& where)
    : Error(ErrorCode::kNonFinite,
            "non-finite activation in " + where + " (block " + std::to_string(block) + ")"),
      block_(block) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace mtlasd
