#include "ebsaea/error.hpp"

namespace ebsaea {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kInvalidBounds: return "InvalidBounds";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kDimensionError: return "DimensionError";
    case ErrorCode::kFeasibilityCalibrationFailed: return "FeasibilityCalibrationFailed";
    case ErrorCode::kBudgetExhaustedAtInit: return "BudgetExhaustedAtInit";
    case ErrorCode::kEmptySet: return "EmptySet";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kZeroVariance: return "ZeroVariance";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kUnsupportedFamily: return "UnsupportedFamily";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

bool is_numerical(ErrorCode code) {
  return code == ErrorCode::kNotPositiveDefinite ||
         code == ErrorCode::kFeasibilityCalibrationFailed ||
         code == ErrorCode::kZeroVariance;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace ebsaea
