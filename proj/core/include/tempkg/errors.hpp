#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tempkg {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed dataset line. `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation was violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class TokenizeError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class OracleOverflow : public Error {
 public:
  using Error::Error;
};

class LengthError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss during optimisation.
class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, std::size_t step, const std::string& what)
      : Error("diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
              ": " + what),
        epoch_(epoch),
        step_(step) {}
  int epoch() const noexcept { return epoch_; }
  std::size_t step() const noexcept { return step_; }

 private:
  int epoch_;
  std::size_t step_;
};

}  // namespace tempkg
