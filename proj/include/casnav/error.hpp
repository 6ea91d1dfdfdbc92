#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace casnav {

enum class ErrorCode {
  InvalidArgument,
  NonFinite,
  DimensionMismatch,
  DegenerateDepth,
  BehindCamera,
  SingularIntrinsics,
  LostPositivity,
  SingularMatrix,
  DegenerateAnchors,
  RepeatedEigenvalues,
  WindowTooShort,
  NonPositiveTrace,
  ConfigParse,
  UnknownParameter,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateDepth: return "DegenerateDepth";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::SingularIntrinsics: return "SingularIntrinsics";
    case ErrorCode::LostPositivity: return "LostPositivity";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::DegenerateAnchors: return "DegenerateAnchors";
    case ErrorCode::RepeatedEigenvalues: return "RepeatedEigenvalues";
    case ErrorCode::WindowTooShort: return "WindowTooShort";
    case ErrorCode::NonPositiveTrace: return "NonPositiveTrace";
    case ErrorCode::ConfigParse: return "ConfigParse";
    case ErrorCode::UnknownParameter: return "UnknownParameter";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace casnav
