#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trajaug {

enum class ErrorCode {
  MissingManifest,
  SchemaVersionMismatch,
  InvariantViolation,
  IoFailure,
  RangeError,
  DimensionMismatch,
  AgentNotFound,
  PhaseCountMismatch,
  UnlabeledTrajectory,
  NoDonorAvailable,
  TargetMissing,
  BudgetExhausted,
  ConfigError,
  InvalidPermutation,
  PlacementFailure,
  UnknownTask,
  UnreachableTarget,
  ExpertFailure,
  InitialStateMissing,
  StageFailure,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace trajaug
