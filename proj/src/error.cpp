#include "deid/error.hpp"

namespace deid {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedManifest: return "MalformedManifest";
    case ErrorCode::DuplicateSession: return "DuplicateSession";
    case ErrorCode::NonMonotonicFrames: return "NonMonotonicFrames";
    case ErrorCode::MalformedCsv: return "MalformedCsv";
    case ErrorCode::WrongPointCount: return "WrongPointCount";
    case ErrorCode::NonFiniteCoordinate: return "NonFiniteCoordinate";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DegenerateEye: return "DegenerateEye";
    case ErrorCode::DegeneratePerimeter: return "DegeneratePerimeter";
    case ErrorCode::DegenerateMouth: return "DegenerateMouth";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::AllBandsDegenerate: return "AllBandsDegenerate";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::InsufficientVerdicts: return "InsufficientVerdicts";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MalformedConfig: return "MalformedConfig";
    case ErrorCode::MalformedReport: return "MalformedReport";
    case ErrorCode::MissingReport: return "MissingReport";
    case ErrorCode::BindError: return "BindError";
  }
  return "Unknown";
}

}  // namespace deid
