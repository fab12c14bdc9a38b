#pragma once

#include <stdexcept>
#include <string>

namespace recon {

/// Error categories surfaced through the C API as status codes.
enum class ErrorCode {
  InvalidArgument = 1,
  Shape = 2,
  Io = 3,
  Format = 4,
  Version = 5,
  Truncated = 6,
  Checksum = 7,
  Diverged = 8,
  Config = 9,
  Contract = 10,
  Calibration = 11,
  Degenerate = 12,
  Internal = 99,
};

char const *ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error
{
public:
  Error(ErrorCode code, std::string const &msg)
    : std::runtime_error(msg)
    , code_(code)
  {
  }

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, std::string const &msg) { throw Error(code, msg); }

inline void Require(bool cond, ErrorCode code, std::string const &msg)
{
  if (!cond) { throw Error(code, msg); }
}

} // namespace recon
