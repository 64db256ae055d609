#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace promptforge {

enum class ErrorKind {
  Io,
  MalformedHeader,
  UnsupportedDtype,
  TruncatedData,
  UnsupportedFormat,
  DimensionOverflow,
  DimensionMismatch,
  InvalidArgument,
  OutOfRange,
  InvalidConfig,
  NoPositivePrompt,
  ExternalFailure,
  Timeout,
  MissingOutput,
  MalformedOutput,
  MalformedInput,
  DegenerateGeometry,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::MalformedHeader: return "malformed-header";
    case ErrorKind::UnsupportedDtype: return "unsupported-dtype";
    case ErrorKind::TruncatedData: return "truncated-data";
    case ErrorKind::UnsupportedFormat: return "unsupported-format";
    case ErrorKind::DimensionOverflow: return "dimension-overflow";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::OutOfRange: return "out-of-range";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::NoPositivePrompt: return "no-positive-prompt";
    case ErrorKind::ExternalFailure: return "external-failure";
    case ErrorKind::Timeout: return "timeout";
    case ErrorKind::MissingOutput: return "missing-output";
    case ErrorKind::MalformedOutput: return "malformed-output";
    case ErrorKind::MalformedInput: return "malformed-input";
    case ErrorKind::DegenerateGeometry: return "degenerate-geometry";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so callers can
/// dispatch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace promptforge
