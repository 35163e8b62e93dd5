#pragma once

#include <stdexcept>
#include <string>

namespace battbench {

enum class ErrorKind {
  InvalidInput,
  InvalidAction,
  SeriesExhausted,
  Alignment,
  Parse,
  Validation,
  Size,
  State,
  Numeric,
  Shape,
  Domain,
  Io,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so that callers (the CLI
/// in particular) can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Validation-type failures are the caller's fault (bad config or data).
  bool is_validation() const noexcept {
    switch (kind_) {
      case ErrorKind::InvalidInput:
      case ErrorKind::Alignment:
      case ErrorKind::Parse:
      case ErrorKind::Validation:
      case ErrorKind::Size:
      case ErrorKind::Domain:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorKind kind_;
};

}  // namespace battbench
