#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trackfill {

enum class ErrorCode {
  MalformedFile,
  UnsupportedFormat,
  NonQuadrupleMeter,
  NoQuadrupleContent,
  EmptyPiece,
  InvalidPiece,
  InvalidSelection,
  FillCountMismatch,
  InvalidSequence,
  TooShort,
  ContextTooLong,
  Diverged,
  StepBudgetExceeded,
  AllMasked,
  InvalidRequest,
  InvalidConfig,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::NonQuadrupleMeter: return "NonQuadrupleMeter";
    case ErrorCode::NoQuadrupleContent: return "NoQuadrupleContent";
    case ErrorCode::EmptyPiece: return "EmptyPiece";
    case ErrorCode::InvalidPiece: return "InvalidPiece";
    case ErrorCode::InvalidSelection: return "InvalidSelection";
    case ErrorCode::FillCountMismatch: return "FillCountMismatch";
    case ErrorCode::InvalidSequence: return "InvalidSequence";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::ContextTooLong: return "ContextTooLong";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::StepBudgetExceeded: return "StepBudgetExceeded";
    case ErrorCode::AllMasked: return "AllMasked";
    case ErrorCode::InvalidRequest: return "InvalidRequest";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (CLI exit codes, HTTP status mapping) can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace trackfill
