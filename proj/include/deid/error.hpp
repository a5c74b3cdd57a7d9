#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deid {

enum class ErrorCode {
  MalformedManifest,
  DuplicateSession,
  NonMonotonicFrames,
  MalformedCsv,
  WrongPointCount,
  NonFiniteCoordinate,
  DecodeError,
  UnsupportedFormat,
  IoError,
  DegenerateEye,
  DegeneratePerimeter,
  DegenerateMouth,
  ShapeMismatch,
  TooSmall,
  AllBandsDegenerate,
  EmptySeries,
  SeriesTooShort,
  InsufficientVerdicts,
  InvalidArgument,
  MalformedConfig,
  MalformedReport,
  MissingReport,
  BindError,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// Every recoverable failure in the library is reported as an AuditError
// carrying a stable, machine-readable code.
class AuditError : public std::runtime_error {
 public:
  AuditError(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace deid
