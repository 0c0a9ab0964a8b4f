#include "coadapt/error.hpp"

namespace coadapt {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidPrompt: return "InvalidPrompt";
    case ErrorCode::InvalidEdit: return "InvalidEdit";
    case ErrorCode::DegenerateEmbedding: return "DegenerateEmbedding";
    case ErrorCode::ControllerMismatch: return "ControllerMismatch";
    case ErrorCode::DimError: return "DimError";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::RewardError: return "RewardError";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::NumericsError: return "NumericsError";
    case ErrorCode::SessionClosed: return "SessionClosed";
    case ErrorCode::WriteError: return "WriteError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::CollisionError: return "CollisionError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace coadapt
