#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace waitmarket {

enum class ErrorKind {
  argument,
  numeric,
  domain,
  cap_exceeded,
  no_bracket,
  convergence,
  singularity,
  precondition,
  invalid_environment,
  unbounded,
  undefined_conditional,
  config,
  usage,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::argument: return "argument";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::domain: return "domain";
    case ErrorKind::cap_exceeded: return "cap-exceeded";
    case ErrorKind::no_bracket: return "no-bracket";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::singularity: return "singularity";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::invalid_environment: return "invalid-environment";
    case ErrorKind::unbounded: return "unbounded";
    case ErrorKind::undefined_conditional: return "undefined-conditional";
    case ErrorKind::config: return "config";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by first_crossing_time; carries the cap that was tried so the caller
// can retry with a larger one.
class CapExceeded : public Error {
 public:
  CapExceeded(double cap, const std::string& message)
      : Error(ErrorKind::cap_exceeded, message), cap_(cap) {}

  double cap() const noexcept { return cap_; }

 private:
  double cap_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace waitmarket
