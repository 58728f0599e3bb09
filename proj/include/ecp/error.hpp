#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ecp {

enum class ErrorKind {
  InvalidInput,
  MissingParam,
  MissingEmbedding,
  DegenerateFit,
  DegenerateInput,
  DuplicateId,
  FormatError,
  ParseError,
  IoError,
};

inline std::string_view to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorKind::InvalidInput, message);
}

inline std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::MissingParam: return "MissingParam";
    case ErrorKind::MissingEmbedding: return "MissingEmbedding";
    case ErrorKind::DegenerateFit: return "DegenerateFit";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Error";
}

}  // namespace ecp
