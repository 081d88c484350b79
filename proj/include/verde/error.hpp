#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace verde {

/// Base of every runtime failure raised by the library (argument errors use std::invalid_argument).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what) : Error(path + ": " + what), path_(path) {}
  [[nodiscard]] const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Malformed file content; line numbers are 1-based.
class ProtocolError : public Error {
 public:
  ProtocolError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class OracleUnavailable : public Error {
 public:
  using Error::Error;
};

}  // namespace verde
