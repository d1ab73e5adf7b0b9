#include "trajaug/error.hpp"

namespace trajaug {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingManifest: return "MissingManifest";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::RangeError: return "RangeError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::AgentNotFound: return "AgentNotFound";
    case ErrorCode::PhaseCountMismatch: return "PhaseCountMismatch";
    case ErrorCode::UnlabeledTrajectory: return "UnlabeledTrajectory";
    case ErrorCode::NoDonorAvailable: return "NoDonorAvailable";
    case ErrorCode::TargetMissing: return "TargetMissing";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InvalidPermutation: return "InvalidPermutation";
    case ErrorCode::PlacementFailure: return "PlacementFailure";
    case ErrorCode::UnknownTask: return "UnknownTask";
    case ErrorCode::UnreachableTarget: return "UnreachableTarget";
    case ErrorCode::ExpertFailure: return "ExpertFailure";
    case ErrorCode::InitialStateMissing: return "InitialStateMissing";
    case ErrorCode::StageFailure: return "StageFailure";
  }
  return "Unknown";
}

}  // namespace trajaug
