#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace traverse {

/// Every failure the library reports. The numeric value doubles as the CLI
/// exit code, so existing values must never be renumbered.
enum class ErrorCode : int {
  InvalidArgument = 10,
  IoError = 11,
  ManifestInvalid = 12,
  ManifestEmpty = 13,

  BadMagic = 20,
  TruncatedFile = 21,
  NonFinitePoint = 22,
  MalformedRecord = 23,
  NonMonotonicArclength = 24,

  NoFramesInWindow = 30,
  TooFewTraversals = 31,
  EmptyAfterCropping = 32,
  SpecMismatch = 33,
  DimensionMismatch = 34,
  EmptyBatch = 35,
  DatasetTooSmall = 36,
  EmptyInput = 37,
  LengthMismatch = 38,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }
  [[nodiscard]] int exit_code() const noexcept { return static_cast<int>(code_); }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace traverse
