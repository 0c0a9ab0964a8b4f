#pragma once

#include <stdexcept>
#include <string>

namespace coadapt {

enum class ErrorCode {
  InvalidPrompt,
  InvalidEdit,
  DegenerateEmbedding,
  ControllerMismatch,
  DimError,
  OutOfRange,
  RewardError,
  InsufficientSamples,
  SingularCovariance,
  EmptyPool,
  NumericsError,
  SessionClosed,
  WriteError,
  ParseError,
  CollisionError,
  EmptyInput,
  NotFound,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (CLI, HTTP service) can map it to an exit code or status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace coadapt
