#pragma once

#include <stdexcept>
#include <string>

namespace tocp {

// Numeric values are mirrored by tocp_status in tocp.h.
enum class ErrorCode : int {
  kDimension = 1,
  kDomain = 2,
  kArgument = 3,
  kNumerical = 4,
  kConvergence = 5,
  kFeasibility = 6,
  kHorizon = 7,
  kDegenerate = 8,
  kDiagnostic = 9,
  kSchema = 10,
  kIo = 11,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace tocp
