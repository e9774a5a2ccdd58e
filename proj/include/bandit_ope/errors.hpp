#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bandit_ope {

// Base of every error the library raises. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// An operation that needs at least one event/example was handed none.
class NoDataError : public Error {
 public:
  using Error::Error;
};

// Rejection sampling accepted nothing, so its estimate is undefined.
class NoAcceptedSamples : public Error {
 public:
  using Error::Error;
};

class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace bandit_ope
