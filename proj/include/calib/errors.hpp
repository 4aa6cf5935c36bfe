#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace calib {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller handed us data that violates an operation's precondition.
struct InvalidInputError : Error {
  using Error::Error;
};

// A file did not conform to its format. Carries the 1-based line
// (or byte offset for binary formats) where parsing stopped.
struct ParseError : Error {
  ParseError(const std::string& what, long where)
      : Error(what + " (line " + std::to_string(where) + ")"), location(where) {}
  long location;
};

// Configuration is structurally valid but unusable (empty split, bad grid, ...).
struct ConfigError : Error {
  using Error::Error;
};

// A numerical routine failed to converge or produced non-finite values.
struct NumericError : Error {
  using Error::Error;
};

// An iterative fit diverged; carries the objective trace for diagnosis.
struct FitError : Error {
  FitError(const std::string& what, std::vector<double> trace_in)
      : Error(what), trace(std::move(trace_in)) {}
  std::vector<double> trace;
};

}  // namespace calib
