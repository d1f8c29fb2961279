#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dpi {

enum class ErrorCode {
  kNearPiRotation,
  kOutOfDomain,
  kEmptySampleSet,
  kWindowMismatch,
  kBehindCamera,
  kSingularNormalEquations,
  kUnsupportedCase,
  kConfig,
  kData,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable error kind. The CLI maps kinds to
/// exit codes (config 2, data 3, numerical 4).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dpi
