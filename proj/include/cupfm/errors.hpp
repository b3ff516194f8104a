#pragma once

#include <stdexcept>
#include <string>

namespace cupfm {

// Every failure mode the library reports. Codes map to CLI exit categories:
// data/shape problems exit 2, numerical breakdowns exit 3.
enum class ErrorCode {
  UnbalancedPanel,
  DuplicateCell,
  NonNumericField,
  DegenerateProjection,
  TooShort,
  NotSymmetric,
  RankRequestTooLarge,
  NoConvergence,
  RankDeficientBasis,
  NotPositiveDefinite,
  LagOutOfRange,
  EmptyKernelSupport,
  DimensionMismatch,
  SingularOmegaB,
  SingularDesign,
  SingularLoadingGram,
  SingularDZ,
  ZeroStandardError,
  SingularRestriction,
  InvalidArgument,
};

inline const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnbalancedPanel: return "UnbalancedPanel";
    case ErrorCode::DuplicateCell: return "DuplicateCell";
    case ErrorCode::NonNumericField: return "NonNumericField";
    case ErrorCode::DegenerateProjection: return "DegenerateProjection";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::RankRequestTooLarge: return "RankRequestTooLarge";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::RankDeficientBasis: return "RankDeficientBasis";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::LagOutOfRange: return "LagOutOfRange";
    case ErrorCode::EmptyKernelSupport: return "EmptyKernelSupport";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularOmegaB: return "SingularOmegaB";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::SingularLoadingGram: return "SingularLoadingGram";
    case ErrorCode::SingularDZ: return "SingularDZ";
    case ErrorCode::ZeroStandardError: return "ZeroStandardError";
    case ErrorCode::SingularRestriction: return "SingularRestriction";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

// 2 = malformed input or configuration, 3 = numerical failure.
inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnbalancedPanel:
    case ErrorCode::DuplicateCell:
    case ErrorCode::NonNumericField:
    case ErrorCode::TooShort:
    case ErrorCode::LagOutOfRange:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::RankRequestTooLarge:
    case ErrorCode::InvalidArgument:
      return 2;
    default:
      return 3;
  }
}

}  // namespace cupfm
