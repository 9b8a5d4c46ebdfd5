#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace subaudit {

enum class ErrorCode {
  kLengthOverflow,
  kParse,
  kSchema,
  kInput,
  kConstruction,
  kInsufficientSamples,
  kIo,
  kTransport,
};

std::string_view to_string(ErrorCode code);

/// Base exception for all library failures. The code lets callers (and the
/// CLI exit-code mapping) branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure inside a line-oriented file; line numbers are 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message);

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace subaudit
