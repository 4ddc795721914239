#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace causalreg {

// Error categories map one-to-one onto CLI exit codes (2 usage, 3 data, 4 numeric).
enum class ErrorKind { usage, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  std::string_view code() const noexcept {
    switch (kind_) {
      case ErrorKind::usage: return "usage";
      case ErrorKind::data: return "data";
      case ErrorKind::numeric: return "numeric";
    }
    return "unknown";
  }

  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::usage: return 2;
      case ErrorKind::data: return 3;
      case ErrorKind::numeric: return 4;
    }
    return 1;
  }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& message) : Error(ErrorKind::usage, message) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& message) : Error(ErrorKind::data, message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error(ErrorKind::numeric, message) {}
};

}  // namespace causalreg
