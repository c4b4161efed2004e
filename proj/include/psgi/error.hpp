#pragma once

#include <stdexcept>
#include <string>

namespace psgi {

enum class ErrorCode {
  MissingFeature,
  UnknownSignature,
  UnboundSubtask,
  TooManyFeatures,
  ParseError,
  ValidationError,
  PoolTooSmall,
  NoReachableSubtask,
  EpisodeExhausted,
  MissingEntity,
  DimensionMismatch,
  TooFewEntities,
  NoEmbedding,
  EmptyTable,
  NoEligibleOption,
  InvalidArgument,
  IoError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFeature: return "MissingFeature";
    case ErrorCode::UnknownSignature: return "UnknownSignature";
    case ErrorCode::UnboundSubtask: return "UnboundSubtask";
    case ErrorCode::TooManyFeatures: return "TooManyFeatures";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::PoolTooSmall: return "PoolTooSmall";
    case ErrorCode::NoReachableSubtask: return "NoReachableSubtask";
    case ErrorCode::EpisodeExhausted: return "EpisodeExhausted";
    case ErrorCode::MissingEntity: return "MissingEntity";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooFewEntities: return "TooFewEntities";
    case ErrorCode::NoEmbedding: return "NoEmbedding";
    case ErrorCode::EmptyTable: return "EmptyTable";
    case ErrorCode::NoEligibleOption: return "NoEligibleOption";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace psgi
