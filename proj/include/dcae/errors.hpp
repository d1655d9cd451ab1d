#pragma once

#include <stdexcept>
#include <string>

namespace dcae {

// Base for every error raised by the library. The CLI maps subclasses to
// distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Non-finite objective during a solver run. Under the standing assumptions
// this cannot happen, so it signals a misconfigured instance.
class Diverged : public Error {
 public:
  using Error::Error;
};

}  // namespace dcae
