#include "traverse/error.hpp"

namespace traverse {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ManifestInvalid: return "ManifestInvalid";
    case ErrorCode::ManifestEmpty: return "ManifestEmpty";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::NonFinitePoint: return "NonFinitePoint";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::NonMonotonicArclength: return "NonMonotonicArclength";
    case ErrorCode::NoFramesInWindow: return "NoFramesInWindow";
    case ErrorCode::TooFewTraversals: return "TooFewTraversals";
    case ErrorCode::EmptyAfterCropping: return "EmptyAfterCropping";
    case ErrorCode::SpecMismatch: return "SpecMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::DatasetTooSmall: return "DatasetTooSmall";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
  }
  return "Unknown";
}

}  // namespace traverse
