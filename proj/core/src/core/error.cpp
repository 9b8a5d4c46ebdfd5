#include "subaudit/core/error.hpp"

namespace subaudit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kLengthOverflow: return "length_overflow";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kSchema: return "schema_error";
    case ErrorCode::kInput: return "input_error";
    case ErrorCode::kConstruction: return "construction_error";
    case ErrorCode::kInsufficientSamples: return "insufficient_samples";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kTransport: return "transport_error";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

ParseError::ParseError(std::size_t line, const std::string& message)
    : Error(ErrorCode::kParse, "line " + std::to_string(line) + ": " + message), line_(line) {}

}  // namespace subaudit
