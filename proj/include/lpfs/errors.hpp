#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lpfs {

// Caller broke a precondition (length mismatch, negative threshold, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Annealing parameter left its admissible range (epsilon <= 0).
class ScheduleError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Bad input data: out-of-range ids, single-class evaluation streams, ...
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Training produced a non-finite loss.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad command line or configuration.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lpfs
