#include "engage/error.hpp"

namespace engage {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kMalformedRow: return "MalformedRow";
    case ErrorCode::kEmptyFile: return "EmptyFile";
    case ErrorCode::kDuplicateVideoId: return "DuplicateVideoId";
    case ErrorCode::kMixedLabelKinds: return "MixedLabelKinds";
    case ErrorCode::kUnresolvablePath: return "UnresolvablePath";
    case ErrorCode::kAllFramesInvalid: return "AllFramesInvalid";
    case ErrorCode::kEmptySeries: return "EmptySeries";
    case ErrorCode::kSeriesTooShort: return "SeriesTooShort";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kLayoutMismatch: return "LayoutMismatch";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kInputOutOfRange: return "InputOutOfRange";
    case ErrorCode::kEmptyClass: return "EmptyClass";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kMissingCheckpoint: return "MissingCheckpoint";
  }
  return "UnknownError";
}

}  // namespace engage
