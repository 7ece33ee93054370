#pragma once

#include <stdexcept>
#include <string>

namespace oodkit {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kBadMagic,
  kUnsupportedVersion,
  kUnsupportedDtype,
  kTruncatedPayload,
  kTrailingBytes,
  kNonFinite,
  kFlagPayloadMismatch,
  kDimensionMismatch,
  kDimensionOverflow,
  kMissingArtifact,
  kMissingInput,
  kDegenerate,
  kNotConverged,
  kAccessDenied,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the toolkit. The code is stable and meant for
/// callers that branch on the failure kind; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace oodkit
