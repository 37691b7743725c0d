#pragma once

#include <stdexcept>
#include <string>

namespace tcl {

enum class ErrorKind {
  Argument,
  Numeric,
  Format,
  Config,
  Degenerate,
  Training,
  Io,
};

// Base of every error thrown by the library. The kind drives the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& w) : Error(ErrorKind::Argument, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorKind::Format, w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct DegenerateError : Error {
  explicit DegenerateError(const std::string& w) : Error(ErrorKind::Degenerate, w) {}
};
struct TrainingError : Error {
  explicit TrainingError(const std::string& w) : Error(ErrorKind::Training, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};

// 0 success; 2 configuration; 3 data/format; 4 numeric/training.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Argument:
    case ErrorKind::Config:
      return 2;
    case ErrorKind::Format:
    case ErrorKind::Io:
      return 3;
    case ErrorKind::Numeric:
    case ErrorKind::Degenerate:
    case ErrorKind::Training:
      return 4;
  }
  return 1;
}

}  // namespace tcl
