#include "mddmd/error.hpp"

namespace mddmd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::DegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ResolventSingular: return "ResolventSingular";
    case ErrorCode::BiorthogonalityFailure: return "BiorthogonalityFailure";
    case ErrorCode::EnsembleUnreliable: return "EnsembleUnreliable";
    case ErrorCode::BranchAmbiguity: return "BranchAmbiguity";
    case ErrorCode::BlowUp: return "BlowUp";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace mddmd
