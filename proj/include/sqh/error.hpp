#pragma once

#include <stdexcept>
#include <string>

namespace sqh {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorCode : int {
  kOk = 0,
  kBadArgument = 2,
  kCorruptStream = 3,
  kLadderMismatch = 4,
  kNumeric = 5,
};

inline const char* errorCodeName(ErrorCode code)
{
  switch (code) {
  case ErrorCode::kOk: return "ok";
  case ErrorCode::kBadArgument: return "bad_argument";
  case ErrorCode::kCorruptStream: return "corrupt_stream";
  case ErrorCode::kLadderMismatch: return "ladder_mismatch";
  case ErrorCode::kNumeric: return "numeric_failure";
  }
  return "unknown";
}

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
    : std::runtime_error(what), code_(code)
  {}

  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what)
{
  throw Error(code, what);
}

}  // namespace sqh
