// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qrlora {

enum class ErrorCode {
  kUsage,
  kNonFinite,
  kNoConvergence,
  kShapeError,
  kShapeMismatch,
  kZeroMatrix,
  kRankOutOfRange,
  kBasisMismatch,
  kEmptySpec,
  kDimError,
  kKindUnavailable,
  kTemplateMismatch,
  kEmptyStudy,
  kBadMagic,
  kUnsupportedVersion,
  kCorruptHeader,
  kTruncatedPayload,
  kChecksumMismatch,
  kVerificationFailed,
  kIo,
};

/// Machine-readable name, e.g. "BASIS_MISMATCH".
std::string_view error_code_name(ErrorCode code);

/// Process exit code for a failure of this kind:
/// 1 usage, 2 validation/mismatch, 3 I/O, 4 numerical failure.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace qrlora
