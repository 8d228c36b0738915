#pragma once

#include <stdexcept>
#include <string>

namespace vpfa {

enum class ErrorCode {
  InvalidArgument = 1,
  Io,
  Format,
  Dimension,
  Numeric,
  InsufficientData,
};

const char* to_string(ErrorCode code);

// Every error raised by the toolkit core. The C layer maps `code()` onto its
// status enum, so keep the two in sync.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace vpfa
