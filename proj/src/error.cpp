#include "singmix/error.hpp"

namespace singmix {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::InvalidField: return "InvalidField";
    case ErrorCode::Blowup: return "Blowup";
    case ErrorCode::OnStableManifold: return "OnStableManifold";
    case ErrorCode::OnGamma: return "OnGamma";
    case ErrorCode::NoReturn: return "NoReturn";
    case ErrorCode::FoliationError: return "FoliationError";
    case ErrorCode::Undersampled: return "Undersampled";
    case ErrorCode::ZeroDistance: return "ZeroDistance";
    case ErrorCode::OrbitOnCriticalSet: return "OrbitOnCriticalSet";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::IllConditionedSplitting: return "IllConditionedSplitting";
    case ErrorCode::IncompleteInduction: return "IncompleteInduction";
    case ErrorCode::TailCheckFailed: return "TailCheckFailed";
    case ErrorCode::LYFailed: return "LYFailed";
    case ErrorCode::CriticalCrossing: return "CriticalCrossing";
    case ErrorCode::UsageError: return "UsageError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace singmix
