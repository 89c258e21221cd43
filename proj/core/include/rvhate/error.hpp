#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rvhate {

enum class ErrorCode {
  // input / format errors
  DimensionMismatch,
  ZeroNormVector,
  NonFiniteValue,
  EmptyInput,
  InvalidArgument,
  LengthMismatch,
  ShapeMismatch,
  ParseError,
  DuplicateId,
  InvalidLabel,
  IoError,
  BadMagic,
  VersionMismatch,
  TruncatedFile,
  // training errors
  KTooLarge,
  EmptyCluster,
  MissingAnchorClass,
  NonPositiveTemperature,
  EmptyBatch,
  TrainingFailure,
  // internal invariant broken
  InvariantViolation,
};

enum class ErrorCategory { Input, Training, Internal };

std::string_view to_string(ErrorCode code) noexcept;
ErrorCategory category_of(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace rvhate
