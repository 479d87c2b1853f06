#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace singmix {

enum class ErrorCode {
  InvalidInput,
  InvalidField,
  Blowup,
  OnStableManifold,
  OnGamma,
  NoReturn,
  FoliationError,
  Undersampled,
  ZeroDistance,
  OrbitOnCriticalSet,
  NotConverged,
  IllConditionedSplitting,
  IncompleteInduction,
  TailCheckFailed,
  LYFailed,
  CriticalCrossing,
  UsageError,
  IoError,
};

std::string_view to_string(ErrorCode code);

// All failures raised by the library carry one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace singmix
