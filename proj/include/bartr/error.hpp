#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bartr {

/// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented bound or schema (exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, failed factorizations and the like (exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Statistic is undefined for the given data (zero variance, all-zero differences).
class DegenerateError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Operation called on an object in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Trial state machine received an event that is illegal in its current state.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::size_t offset)
      : Error(what + " (byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IngestError : public ValidationError {
 public:
  IngestError(const std::string& what, std::size_t line)
      : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Every optimizer restart diverged. Carries the best objective reached, if any.
class ConvergenceError : public NumericError {
 public:
  ConvergenceError(const std::string& what, double best_objective)
      : NumericError(what), best_objective_(best_objective) {}
  double best_objective() const noexcept { return best_objective_; }

 private:
  double best_objective_;
};

}  // namespace bartr
