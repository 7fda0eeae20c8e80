#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ebsaea {

enum class ErrorCode {
  kNotPositiveDefinite,
  kInvalidBounds,
  kShapeMismatch,
  kTooFewPoints,
  kVersionMismatch,
  kSchemaError,
  kIoError,
  kDimensionError,
  kFeasibilityCalibrationFailed,
  kBudgetExhaustedAtInit,
  kEmptySet,
  kLengthMismatch,
  kZeroVariance,
  kTooFewSamples,
  kUnsupportedFamily,
  kInvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// True for failures caused by ill-conditioned numerics rather than bad input.
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ebsaea
