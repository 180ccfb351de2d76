// Copyright 2026 The qrlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrlora/error.hpp"

namespace qrlora {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage: return "USAGE";
    case ErrorCode::kNonFinite: return "NON_FINITE";
    case ErrorCode::kNoConvergence: return "NO_CONVERGENCE";
    case ErrorCode::kShapeError: return "SHAPE_ERROR";
    case ErrorCode::kShapeMismatch: return "SHAPE_MISMATCH";
    case ErrorCode::kZeroMatrix: return "ZERO_MATRIX";
    case ErrorCode::kRankOutOfRange: return "RANK_OUT_OF_RANGE";
    case ErrorCode::kBasisMismatch: return "BASIS_MISMATCH";
    case ErrorCode::kEmptySpec: return "EMPTY_SPEC";
    case ErrorCode::kDimError: return "DIM_ERROR";
    case ErrorCode::kKindUnavailable: return "KIND_UNAVAILABLE";
    case ErrorCode::kTemplateMismatch: return "TEMPLATE_MISMATCH";
    case ErrorCode::kEmptyStudy: return "EMPTY_STUDY";
    case ErrorCode::kBadMagic: return "BAD_MAGIC";
    case ErrorCode::kUnsupportedVersion: return "UNSUPPORTED_VERSION";
    case ErrorCode::kCorruptHeader: return "CORRUPT_HEADER";
    case ErrorCode::kTruncatedPayload: return "TRUNCATED_PAYLOAD";
    case ErrorCode::kChecksumMismatch: return "CHECKSUM_MISMATCH";
    case ErrorCode::kVerificationFailed: return "VERIFICATION_FAILED";
    case ErrorCode::kIo: return "IO_ERROR";
  }
  return "UNKNOWN";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage:
      return 1;
    case ErrorCode::kIo:
      return 3;
    case ErrorCode::kNonFinite:
    case ErrorCode::kNoConvergence:
      return 4;
    default:
      return 2;
  }
}

}  // namespace qrlora
