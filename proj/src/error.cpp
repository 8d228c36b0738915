#include "error.hpp"

namespace vpfa {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::Format: return "format error";
    case ErrorCode::Dimension: return "dimension mismatch";
    case ErrorCode::Numeric: return "numeric error";
    case ErrorCode::InsufficientData: return "insufficient data";
  }
  return "unknown error";
}

}  // namespace vpfa
